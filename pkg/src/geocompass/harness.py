"""Experiment orchestration: configs, run manifests, worker pools and benchmark protocols."""
from __future__ import annotations

import hashlib
import json
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy

from .alphabet import DEFAULT_ALPHABET, Alphabet
from .decoders import (DecoderModel, argmax_peptide, load_model, make_flat_linear, make_pad_growing_mlp,
                       make_sphere, make_toy_mlp)
from .enumeration import EnumParams, ablation
from .lebo import LeboParams, lebo
from .oracles import make_potential, parse_oracle_name, random_mutation_baseline
from .pogs import OptimConfig, pogs
from .walk import WalkTrace, euclidean_walk, path_rng

SEED_ENV = "GEOCOMPASS_SEED"
VERSION = "0.1.0"
LEBO_VARIANTS = ("lebo", "euclidean", "no-mutation", "no-walk", "random-mutation")
POGS_VARIANTS = ("straight", "lambda=0", "lambda=0.01")
POGS_METRICS = ("latent_length", "ambient_length", "peptide_path_length", "potential", "seeds", "wells")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# ------------------------------------------------------------------ plumbing


def resolve_seed(seed: int | None) -> int:
    """The run seed, with ``GEOCOMPASS_SEED`` taking precedence when set."""
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return 0 if seed is None else int(seed)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def versions() -> dict:
    return {"geocompass": VERSION, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def write_manifest(path, command: str, argv: list[str], config: dict, run_seed: int, outputs: list[str]) -> dict:
    manifest = {"command": command, "argv": list(argv), "config": config, "config_hash": config_hash(config),
                "run_seed": run_seed, "versions": versions(), "outputs": list(outputs)}
    write_json(path, manifest)
    return manifest


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def parallel_map(fn, items, parallelism: int = 1) -> list:
    """``list(map(fn, items))``, fanned out over processes when ``parallelism > 1``.

    Results come back in input order, so merged outputs do not depend on
    scheduling.
    """
    items = list(items)
    if parallelism <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (``n - 1`` denominator; NaN for one value)."""
    v = np.asarray(values, dtype=float)
    std = float(np.std(v, ddof=1)) if len(v) > 1 else float("nan")
    return float(np.mean(v)), std


def format_pm(values, digits: int = 2) -> str:
    m, s = mean_std(values)
    return f"{m:.{digits}f} ± {s:.{digits}f}"


def config_from_dict(cls, data: dict):
    """Instantiate a dataclass from a mapping, rejecting unknown keys."""
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ----------------------------------------------------------------- model specs


def make_model(spec: dict) -> DecoderModel:
    """Toy decoder from a small generator spec (see the ``make-model`` command)."""
    spec = dict(spec)
    if "path" in spec:
        return load_model(spec["path"])
    kind = spec.pop("kind", "toy-mlp")
    residues = spec.pop("residues", None)
    alphabet = DEFAULT_ALPHABET if residues is None else Alphabet(residues)
    try:
        if kind == "toy-mlp":
            if spec.pop("pad_growing", False):
                return make_pad_growing_mlp(alphabet=alphabet, **spec)
            return make_toy_mlp(alphabet=alphabet, **spec)
        if kind == "flat-linear":
            return make_flat_linear(alphabet=alphabet, **spec)
        if kind == "sphere":
            return make_sphere(alphabet=alphabet, **spec)
    except TypeError as exc:
        raise ConfigError(f"bad model spec: {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def euclidean_walk_ablation(z, eps: float, T: float, rng: np.random.Generator) -> WalkTrace:
    """Chart-free isotropic latent walk used as the SORBES ablation."""
    return euclidean_walk(z, eps, T, rng)


# --------------------------------------------------------------- LE-BO bench


@dataclass
class LeboBenchConfig:
    model: dict = field(default_factory=lambda: {"kind": "toy-mlp", "d": 8, "L": 8, "hidden": 32,
                                                 "out_scale": 3.0, "seed": 2, "pad_bias": -3.0})
    oracle: str = "synthetic:motif-bonus:0"
    runs: int = 10
    budget: int = 200
    run_seed: int = 0
    variants: tuple = LEBO_VARIANTS
    d_trust: int = 2
    k_robot: int = 3
    d_robot: int = 2
    kappa_sorbes: float = 0.01
    kappa_mutang: float = 1e-6
    M: int = 10
    T_walk: float = 0.1
    eps: float = 0.1
    theta_mut: float = 0.1
    cap: int = 64
    rho: float = 0.05
    eps_fd: float = 0.05
    parallelism: int = 1

    def __post_init__(self):
        self.variants = tuple(self.variants)
        bad = set(self.variants) - set(LEBO_VARIANTS)
        if bad:
            raise ConfigError(f"unknown variants {sorted(bad)}")
        if self.runs < 1 or self.budget < self.k_robot:
            raise ConfigError("need runs >= 1 and budget >= k_robot")

    def lebo_params(self) -> LeboParams:
        return LeboParams(budget=self.budget, d_trust=self.d_trust, k_robot=self.k_robot, d_robot=self.d_robot)

    def enum_params(self) -> EnumParams:
        return EnumParams(kappa_walk=self.kappa_sorbes, kappa_mut=self.kappa_mutang, M=self.M, T_walk=self.T_walk,
                          eps=self.eps, theta_mut=self.theta_mut, cap=self.cap, rho=self.rho, eps_fd=self.eps_fd)


def seed_peptide(model: DecoderModel, run_seed: int, run: int) -> str:
    """Decoded peptide of a standard-normal latent drawn for one run."""
    return argmax_peptide(model, path_rng(run_seed, run).standard_normal(model.d))


def run_enum_seed(run_seed: int, run: int) -> int:
    return int(np.random.default_rng([int(run_seed), int(run), 1]).integers(2**31))


def _lebo_job(job):
    cfg, variant, run = job
    model = make_model(cfg.model)
    oracle = parse_oracle_name(cfg.oracle, model.L, model.alphabet.residues)
    p0 = seed_peptide(model, cfg.run_seed, run)
    if variant == "random-mutation":
        rng = path_rng(cfg.run_seed + 1, run)
        res = random_mutation_baseline(oracle, p0, cfg.budget, rng, model.alphabet.residues)
        return variant, run, p0, res.best, res.best_value, len(res.history)
    res = lebo(oracle, model, p0, cfg.lebo_params(), ablation(cfg.enum_params(), variant),
               run_seed=run_enum_seed(cfg.run_seed, run))
    return variant, run, p0, res.best, res.best_value, res.calls


def bench_lebo(cfg: LeboBenchConfig) -> tuple[list[dict], list[dict]]:
    """Best values per (variant, run) and a ``mean ± std`` summary per variant."""
    jobs = [(cfg, v, r) for v in cfg.variants for r in range(cfg.runs)]
    out = parallel_map(_lebo_job, jobs, cfg.parallelism)
    rows = [{"variant": v, "run": r, "seed_peptide": p0, "best_peptide": b, "best_value": val, "oracle_calls": n}
            for v, r, p0, b, val, n in out]
    summary = []
    for v in cfg.variants:
        vals = [row["best_value"] for row in rows if row["variant"] == v]
        m, s = mean_std(vals)
        summary.append({"variant": v, "mean": m, "std": s, "summary": format_pm(vals), "runs": len(vals)})
    return rows, summary


# ---------------------------------------------------------------- PoGS bench


@dataclass
class PogsBenchConfig:
    model: dict = field(default_factory=lambda: {"kind": "toy-mlp", "d": 8, "L": 10, "hidden": 64,
                                                 "out_scale": 6.0, "in_scale": 3.0, "seed": 1})
    potential: str = "synthetic:linear-residue-score:0"
    potential_scale: float = 10.0
    potential_shift: float = 0.8
    pairs: int = 50
    z_scale: float = 0.5
    mu: float = 0.1
    lam: float = 0.01
    density: float = 90.0
    theta_pot: float = 5.0
    max_steps: int = 2000
    lr: float = 1e-3
    patience: int = 50
    run_seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if self.pairs < 1 or self.density <= 0 or self.max_steps < 0:
            raise ConfigError("need pairs >= 1, density > 0 and max_steps >= 0")

    def optim(self) -> OptimConfig:
        return OptimConfig(lr=self.lr, patience=self.patience, max_steps=self.max_steps)


def bench_potential(cfg: PogsBenchConfig, model: DecoderModel):
    parts = cfg.potential.split(":")
    if len(parts) != 3 or parts[0] != "synthetic":
        raise ConfigError(f"potential must look like synthetic:<kind>:<seed>, got {cfg.potential!r}")
    return make_potential(parts[1], int(parts[2]), model.L, model.alphabet, cfg.potential_scale,
                          cfg.potential_shift)


def prototype_pair(cfg: PogsBenchConfig, d: int, index: int):
    rng = path_rng(cfg.run_seed, index)
    return cfg.z_scale * rng.standard_normal(d), cfg.z_scale * rng.standard_normal(d)


def _pogs_job(job):
    cfg, index = job
    model = make_model(cfg.model)
    pot = bench_potential(cfg, model)
    za, zb = prototype_pair(cfg, model.d, index)
    out = []
    for variant, lam, opt in (("straight", 0.0, False), ("lambda=0", 0.0, True), ("lambda=0.01", cfg.lam, True)):
        rep = pogs(model, za, zb, pot, lam=lam, mu=cfg.mu, density=cfg.density, config=cfg.optim(),
                   optimize=opt, theta_pot=cfg.theta_pot)
        out.append({"pair": index, "variant": variant, **rep.row()})
    return out


def bench_pogs(cfg: PogsBenchConfig) -> tuple[list[dict], list[dict]]:
    """Per-pair metrics for the three path variants and a 3 x 6 ``mean ± std`` table."""
    rows = [r for chunk in parallel_map(_pogs_job, [(cfg, i) for i in range(cfg.pairs)], cfg.parallelism)
            for r in chunk]
    summary = []
    for v in POGS_VARIANTS:
        sel = [r for r in rows if r["variant"] == v]
        summary.append({"variant": v, **{k: format_pm([r[k] for r in sel]) for k in POGS_METRICS}})
    return rows, summary


def dataclass_dict(obj) -> dict:
    d = asdict(obj)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
