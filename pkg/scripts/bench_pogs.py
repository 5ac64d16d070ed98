"""Run the path benchmark (straight, lambda=0, lambda>0) and print the summary with sign tests."""
import argparse
import json

import numpy as np
from scipy.stats import binomtest

from geocompass.harness import PogsBenchConfig, bench_pogs, config_from_dict


def sign_p(diffs):
    diffs = [d for d in diffs if d != 0]
    if not diffs:
        return 1.0
    return binomtest(sum(d > 0 for d in diffs), len(diffs), alternative="greater").pvalue


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="JSON overriding PogsBenchConfig fields")
    ap.add_argument("--pairs", type=int)
    ap.add_argument("--parallelism", type=int, default=1)
    args = ap.parse_args()

    overrides = json.load(open(args.config)) if args.config else {}
    if args.pairs:
        overrides["pairs"] = args.pairs
    overrides["parallelism"] = args.parallelism
    cfg = config_from_dict(PogsBenchConfig, overrides)
    rows, summary = bench_pogs(cfg)
    for s in summary:
        print("  ".join(f"{k}={v}" for k, v in s.items()))

    def col(variant, key):
        return np.array([r[key] for r in sorted(rows, key=lambda r: r["pair"]) if r["variant"] == variant])

    print("sign test p-values:")
    print(f"  ambient lambda=0 < straight: {sign_p(col('straight', 'ambient_length') - col('lambda=0', 'ambient_length')):.2e}")
    print(f"  potential lambda>0 < lambda=0: {sign_p(col('lambda=0', 'potential') - col('lambda=0.01', 'potential')):.2e}")
    print(f"  wells lambda>0 > lambda=0: {sign_p(col('lambda=0.01', 'wells') - col('lambda=0', 'wells')):.2e}")


if __name__ == "__main__":
    main()
