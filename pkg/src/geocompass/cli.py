"""``geocompass`` command-line entry point.

Every command writes its outputs plus a JSON manifest next to them. Running
``geocompass --replay <manifest>`` re-executes the recorded command with the
recorded seed and must reproduce the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from . import harness
from .decoders import EncodeError, NonFiniteError, argmax_peptide, load_model, save_model
from .enumeration import EnumParams, local_enumeration
from .harness import ConfigError, LeboBenchConfig, PogsBenchConfig
from .lebo import lebo
from .manifold import DegenerateChart, stable_dimension
from .mutang import mutang
from .oracles import parse_oracle_name, parse_potential_name
from .pogs import OptimConfig, pogs
from .walk import WalkParams, path_rng, sorbes_paths

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("geocompass")


# --------------------------------------------------------------------- i/o


def _num(x):
    # repr gives the shortest round-tripping text, so reruns are byte-identical
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(x) for x in r])


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise ConfigError(f"file not found: {path}")
    return path


def _model(path: str):
    _require_file(path)
    try:
        return load_model(path)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load model {path}: {exc}") from exc


def _latent(path: str, d: int) -> np.ndarray:
    data = harness.load_json(path)
    if isinstance(data, dict):
        data = data.get("z")
    z = np.asarray(data, dtype=float)
    if z.shape != (d,):
        raise ConfigError(f"{path}: expected a latent of length {d}, got shape {z.shape}")
    return z


def _config(path: str | None) -> dict:
    if path is None:
        return {}
    data = harness.load_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _sha256(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _positive(name: str, value, strict: bool = True) -> None:
    if value is None or not math.isfinite(value) or (value <= 0 if strict else value < 0):
        raise ConfigError(f"--{name} must be {'positive' if strict else 'nonnegative'}, got {value}")


# ---------------------------------------------------------------- commands


def cmd_make_model(args, seed):
    spec = {"kind": args.kind}
    if args.kind in ("toy-mlp", "pad-growing", "flat-linear"):
        spec.update(d=args.d, L=args.L, seed=args.model_seed)
    if args.kind == "toy-mlp":
        spec.update(hidden=args.hidden, in_scale=args.in_scale, out_scale=args.out_scale, pad_bias=args.pad_bias)
    if args.kind == "pad-growing":
        spec.update(kind="toy-mlp", pad_growing=True)
    if args.kind == "sphere":
        spec.update(radius=args.radius, warp=args.warp)
    if args.residues:
        spec["residues"] = args.residues
    save_model(harness.make_model(spec), args.out)
    return spec, [args.out]


def cmd_rank(args, seed):
    model = _model(args.model)
    _positive("kappa", args.kappa)
    _positive("eps-fd", args.eps_fd)
    rows = []
    for i in range(args.samples):
        z = path_rng(seed, i).standard_normal(model.d)
        k = stable_dimension(model, z, args.kappa, eps_fd=args.eps_fd)
        rows.append((i, k, len(argmax_peptide(model, z))))
    write_csv(args.out, ["z_index", "stable_dim", "decoded_length"], rows)
    return {"samples": args.samples, "kappa": args.kappa, "eps_fd": args.eps_fd}, [args.out]


def _walk_params(args) -> WalkParams:
    try:
        return WalkParams(kappa=args.kappa, eps=args.eps, T=args.T, alpha=args.alpha, delta_max=args.delta_max,
                          rho=args.rho, radius=args.radius, eps_fd=args.eps_fd)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_walk(args, seed):
    model = _model(args.model)
    z = _latent(args.z, model.d)
    params = _walk_params(args)
    batch = sorbes_paths(model, z, params, args.paths, run_seed=seed)
    d = model.d
    header = ["path", "step"] + [f"z{j}" for j in range(d)] + ["sigma", "stopped"]

    def rows():
        for i in range(args.paths):
            for s in range(batch.points.shape[1]):
                yield [i, s, *batch.points[i, s], batch.sigmas[i, s], bool(batch.stops[i, s])]

    write_csv(args.out, header, rows())
    return {"z": z.tolist(), "paths": args.paths, **harness.dataclass_dict(params)}, [args.out]


def cmd_mutate(args, seed):
    model = _model(args.model)
    z = _latent(args.z, model.d)
    _positive("kappa", args.kappa)
    _positive("theta", args.theta, strict=False)
    if args.cap < 1:
        raise ConfigError("--cap must be at least 1")
    out = mutang(model, z, kappa=args.kappa, theta_mut=args.theta, cap=args.cap, eps_fd=args.eps_fd, seed=seed)
    write_lines(args.out, sorted(out))
    return {"z": z.tolist(), "kappa": args.kappa, "theta": args.theta, "cap": args.cap,
            "eps_fd": args.eps_fd}, [args.out]


def _check_peptide(model, peptide: str) -> None:
    bad = sorted(set(peptide) - set(model.alphabet.residues))
    if bad or len(peptide) > model.L:
        raise ConfigError(f"seed peptide {peptide!r} is not a canonical peptide of length <= {model.L}")


def cmd_enumerate(args, seed):
    model = _model(args.model)
    _check_peptide(model, args.seed_peptide)
    params = harness.config_from_dict(EnumParams, _config(args.config))
    out = local_enumeration(model, args.seed_peptide, params, run_seed=seed)
    write_lines(args.out, sorted(out))
    return {"seed_peptide": args.seed_peptide, **harness.dataclass_dict(params)}, [args.out]


_LEBO_KEYS = ("d_trust", "k_robot", "d_robot", "kappa_sorbes", "kappa_mutang", "M", "T_walk", "eps",
              "theta_mut", "rho", "eps_fd", "cap")


def _lebo_settings(cfg: dict, budget: int) -> LeboBenchConfig:
    unknown = set(cfg) - set(_LEBO_KEYS)
    if unknown:
        raise ConfigError(f"unknown lebo config keys: {sorted(unknown)}")
    try:
        return LeboBenchConfig(budget=budget, **cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _lebo_run(job):
    model_path, oracle_name, settings, peptide, run, seed = job
    model = load_model(model_path)
    oracle = parse_oracle_name(oracle_name, model.L, model.alphabet.residues)
    p0 = peptide if peptide is not None else harness.seed_peptide(model, seed, run)
    res = lebo(oracle, model, p0, settings.lebo_params(), settings.enum_params(),
               run_seed=harness.run_enum_seed(seed, run))
    return [(run, it, p, v, b) for it, p, v, b in res.history]


def cmd_lebo(args, seed):
    model = _model(args.model)
    if args.seed_peptide is not None:
        _check_peptide(model, args.seed_peptide)
    try:
        parse_oracle_name(args.oracle, model.L, model.alphabet.residues)
    except (ValueError, OSError, KeyError) as exc:
        raise ConfigError(f"bad oracle {args.oracle!r}: {exc}") from exc
    if args.runs < 1:
        raise ConfigError("--runs must be at least 1")
    settings = _lebo_settings(_config(args.config), args.budget)
    jobs = [(args.model, args.oracle, settings, args.seed_peptide, r, seed) for r in range(args.runs)]
    chunks = harness.parallel_map(_lebo_run, jobs, args.parallelism)
    write_csv(args.out, ["run", "iteration", "peptide", "oracle_value", "best_so_far"],
              (row for chunk in chunks for row in chunk))
    cfg = {k: getattr(settings, k) for k in _LEBO_KEYS}
    return {"oracle": args.oracle, "seed_peptide": args.seed_peptide, "budget": args.budget, "runs": args.runs,
            **cfg}, [args.out]


def cmd_pogs(args, seed):
    model = _model(args.model)
    za, zb = _latent(args.za, model.d), _latent(args.zb, model.d)
    _positive("density", args.density)
    _positive("lambda", args.lam, strict=False)
    _positive("mu", args.mu, strict=False)
    try:
        pot = parse_potential_name(args.potential, model.L, model.alphabet, args.potential_scale,
                                   args.potential_shift)
    except (ValueError, OSError, KeyError) as exc:
        raise ConfigError(f"bad potential {args.potential!r}: {exc}") from exc
    config = OptimConfig(lr=args.lr, max_steps=args.max_steps, patience=args.patience)
    try:
        rep = pogs(model, za, zb, pot, lam=args.lam, mu=args.mu, density=args.density, config=config,
                   optimize=not args.straight, theta_pot=args.theta_pot)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = {"latent_length": rep.latent_length, "ambient_length": rep.ambient_length,
              "peptide_path": rep.peptide_path, "peptide_path_length": len(rep.peptide_path),
              "potential_sum": rep.potential_sum, "seeds": rep.seeds, "wells": rep.wells,
              "energy_trace": rep.energy_trace}
    harness.write_json(args.out, report)
    return {"za": za.tolist(), "zb": zb.tolist(), "lambda": args.lam, "mu": args.mu, "density": args.density,
            "potential": args.potential, "potential_scale": args.potential_scale,
            "potential_shift": args.potential_shift, "lr": args.lr, "max_steps": args.max_steps,
            "patience": args.patience, "theta_pot": args.theta_pot, "straight": args.straight}, [args.out]


def _bench_config(cls, args, seed, overrides: dict):
    cfg = _config(args.config)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.model:
        cfg["model"] = {"path": str(Path(_require_file(args.model)).resolve())}
    cfg["run_seed"] = seed
    cfg["parallelism"] = args.parallelism
    return harness.config_from_dict(cls, cfg)


def _write_summary(out_dir: Path, name: str, summary: list[dict]) -> Path:
    path = out_dir / name
    header = list(summary[0])
    write_csv(path, header, ([row[k] for k in header] for row in summary))
    return path


def cmd_bench_lebo(args, seed):
    cfg = _bench_config(LeboBenchConfig, args, seed, {"runs": args.runs, "budget": args.budget,
                                                      "oracle": args.oracle})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, summary = harness.bench_lebo(cfg)
    raw = out_dir / "bench_lebo_runs.csv"
    header = ["variant", "run", "seed_peptide", "best_peptide", "best_value", "oracle_calls"]
    write_csv(raw, header, ([r[k] for k in header] for r in rows))
    summ = _write_summary(out_dir, "bench_lebo_summary.csv", summary)
    for row in summary:
        print(f"{row['variant']:>16}  {row['summary']}")
    conf = harness.dataclass_dict(cfg)
    conf.pop("parallelism")
    return conf, [str(raw), str(summ)]


def cmd_bench_pogs(args, seed):
    cfg = _bench_config(PogsBenchConfig, args, seed, {"pairs": args.pairs, "max_steps": args.max_steps})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, summary = harness.bench_pogs(cfg)
    raw = out_dir / "bench_pogs_pairs.csv"
    header = ["pair", "variant", *harness.POGS_METRICS]
    write_csv(raw, header, ([r[k] for k in header] for r in rows))
    summ = _write_summary(out_dir, "bench_pogs_summary.csv", summary)
    for row in summary:
        print(f"{row['variant']:>12}  " + "  ".join(f"{k}={row[k]}" for k in harness.POGS_METRICS))
    conf = harness.dataclass_dict(cfg)
    conf.pop("parallelism")
    return conf, [str(raw), str(summ)]


COMMANDS = {
    "make-model": cmd_make_model, "rank": cmd_rank, "walk": cmd_walk, "mutate": cmd_mutate,
    "enumerate": cmd_enumerate, "lebo": cmd_lebo, "pogs": cmd_pogs, "bench-lebo": cmd_bench_lebo,
    "bench-pogs": cmd_bench_pogs,
}


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geocompass", description="Geometry-aware latent exploration toolkit.")
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--seed", type=int, default=None,
                        help=f"run seed (default 0; the {harness.SEED_ENV} environment variable overrides it)")
        sp.add_argument("--parallelism", type=int, default=1, help="worker processes for independent runs")
        sp.add_argument("--manifest", default=None, help="manifest path (default: <first output>.manifest.json)")
        return sp

    sp = add("make-model", "generate a toy decoder and save it as JSON")
    sp.add_argument("--kind", choices=["toy-mlp", "pad-growing", "flat-linear", "sphere"], default="toy-mlp")
    sp.add_argument("--d", type=int, default=8, help="latent dimension")
    sp.add_argument("--L", type=int, default=6, help="maximum peptide length")
    sp.add_argument("--hidden", type=int, default=16, help="hidden width (toy-mlp)")
    sp.add_argument("--model-seed", type=int, default=42, help="weight seed")
    sp.add_argument("--in-scale", type=float, default=1.0)
    sp.add_argument("--out-scale", type=float, default=1.0)
    sp.add_argument("--pad-bias", type=float, default=0.0, help="added to every pad score (toy-mlp)")
    sp.add_argument("--radius", type=float, default=1.0, help="sphere radius")
    sp.add_argument("--warp", type=float, default=0.0, help="sphere chart warp")
    sp.add_argument("--residues", default=None, help="residue alphabet (default: 20 amino acids)")
    sp.add_argument("--out", required=True)

    sp = add("rank", "stable dimension and decoded length at standard-normal latents (CSV)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--kappa", type=float, default=1e-8)
    sp.add_argument("--eps-fd", type=float, default=1e-6, help="finite-difference step for the Jacobian")
    sp.add_argument("--out", required=True)

    sp = add("walk", "SORBES walks from one latent (CSV, one row per path and step)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--z", required=True, help="JSON latent")
    sp.add_argument("--kappa", type=float, default=0.01)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--T", type=float, default=0.1)
    sp.add_argument("--paths", type=int, default=100)
    sp.add_argument("--rho", type=float, default=0.05)
    sp.add_argument("--eps-fd", type=float, default=0.05)
    sp.add_argument("--radius", type=float, default=1.0, help="chart radius")
    sp.add_argument("--alpha", type=float, default=0.99, help="absorbing fraction of the chart radius")
    sp.add_argument("--delta-max", type=float, default=0.5)
    sp.add_argument("--out", required=True)

    sp = add("mutate", "tangent-space mutants of the peptide decoded at a latent (one per line)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--z", required=True, help="JSON latent")
    sp.add_argument("--kappa", type=float, default=1e-6)
    sp.add_argument("--theta", type=float, default=0.1)
    sp.add_argument("--cap", type=int, default=4096)
    sp.add_argument("--eps-fd", type=float, default=0.05)
    sp.add_argument("--out", required=True)

    sp = add("enumerate", "local enumeration around a seed peptide (one per line)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--seed-peptide", required=True)
    sp.add_argument("--config", default=None, help="JSON with enumeration parameters")
    sp.add_argument("--out", required=True)

    sp = add("lebo", "local-enumeration Bayesian optimisation (CSV of every oracle call)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--oracle", required=True, help="synthetic:<kind>:<seed> or an oracle JSON file")
    sp.add_argument("--seed-peptide", default=None, help="default: decode a standard-normal latent per run")
    sp.add_argument("--budget", type=int, default=200)
    sp.add_argument("--runs", type=int, default=1)
    sp.add_argument("--config", default=None, help="JSON with LE-BO hyperparameters")
    sp.add_argument("--out", required=True)

    sp = add("pogs", "potential-augmented geodesic between two latents (JSON report)")
    sp.add_argument("--model", required=True)
    sp.add_argument("--za", required=True)
    sp.add_argument("--zb", required=True)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.0)
    sp.add_argument("--mu", type=float, default=0.0)
    sp.add_argument("--density", type=float, default=90.0, help="waypoints per unit latent distance")
    sp.add_argument("--potential", required=True, help="synthetic:<kind>:<seed> or a potential JSON file")
    sp.add_argument("--potential-scale", type=float, default=1.0)
    sp.add_argument("--potential-shift", type=float, default=0.0)
    sp.add_argument("--theta-pot", type=float, default=5.0)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--max-steps", type=int, default=2000)
    sp.add_argument("--patience", type=int, default=50)
    sp.add_argument("--straight", action="store_true", help="skip optimisation")
    sp.add_argument("--out", required=True)

    sp = add("bench-lebo", "LE-BO, its ablations and random mutation over repeated runs")
    sp.add_argument("--config", default=None, help="JSON overriding benchmark defaults")
    sp.add_argument("--model", default=None, help="decoder JSON replacing the configured toy model")
    sp.add_argument("--oracle", default=None)
    sp.add_argument("--runs", type=int, default=None)
    sp.add_argument("--budget", type=int, default=None)
    sp.add_argument("--out-dir", required=True)

    sp = add("bench-pogs", "straight, lambda=0 and lambda>0 paths over random prototype pairs")
    sp.add_argument("--config", default=None, help="JSON overriding benchmark defaults")
    sp.add_argument("--model", default=None, help="decoder JSON replacing the configured toy model")
    sp.add_argument("--pairs", type=int, default=None)
    sp.add_argument("--max-steps", type=int, default=None)
    sp.add_argument("--out-dir", required=True)
    return p


def _input_files(args) -> dict:
    names = ("model", "z", "za", "zb", "config")
    return {getattr(args, n): _sha256(getattr(args, n)) for n in names
            if isinstance(getattr(args, n, None), str) and os.path.isfile(getattr(args, n))}


def run(argv: list[str], seed_override: int | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.replay:
            return replay(args.replay)
        if args.command is None:
            parser.print_help()
            return EXIT_CONFIG
        if args.parallelism < 1:
            raise ConfigError("--parallelism must be at least 1")
        seed = seed_override if seed_override is not None else harness.resolve_seed(args.seed)
        inputs = _input_files(args)
        config, outputs = COMMANDS[args.command](args, seed)
        manifest = args.manifest or f"{outputs[0]}.manifest.json"
        recorded = [a for a in argv if a != "-v" and a != "--verbose"]
        harness.write_manifest(manifest, args.command, recorded, {**config, "inputs": inputs}, seed, outputs)
        return 0
    except (DegenerateChart, NonFiniteError, FloatingPointError, LinAlgError, EncodeError) as exc:
        print(f"geocompass: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"geocompass: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def replay(manifest_path: str) -> int:
    """Re-run a recorded command after checking its inputs are unchanged."""
    m = harness.load_json(manifest_path)
    try:
        argv, seed, inputs = m["argv"], int(m["run_seed"]), m["config"].get("inputs", {})
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"{manifest_path} is not a geocompass manifest") from exc
    for path, digest in inputs.items():
        if not os.path.isfile(path) or _sha256(path) != digest:
            raise ConfigError(f"input {path} is missing or differs from the recorded run")
    return run(argv, seed_override=seed)


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
