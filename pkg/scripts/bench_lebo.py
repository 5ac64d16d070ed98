"""Run the LE-BO ablation benchmark and print the per-variant table with a Wilcoxon test."""
import argparse
import json

from scipy.stats import wilcoxon

from geocompass.harness import LeboBenchConfig, bench_lebo, config_from_dict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="JSON overriding LeboBenchConfig fields")
    ap.add_argument("--runs", type=int)
    ap.add_argument("--parallelism", type=int, default=1)
    args = ap.parse_args()

    overrides = json.load(open(args.config)) if args.config else {}
    if args.runs:
        overrides["runs"] = args.runs
    overrides["parallelism"] = args.parallelism
    cfg = config_from_dict(LeboBenchConfig, overrides)
    rows, summary = bench_lebo(cfg)
    for s in summary:
        print(f"{s['variant']:>16}  {s['summary']}")
    best = {v: [r["best_value"] for r in rows if r["variant"] == v] for v in cfg.variants}
    if cfg.runs > 1 and "random-mutation" in best and "lebo" in best:
        p = wilcoxon(best["lebo"], best["random-mutation"], alternative="less").pvalue
        print(f"one-sided Wilcoxon, lebo < random-mutation: p = {p:.4f}")


if __name__ == "__main__":
    main()
