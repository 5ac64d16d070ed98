"""Potential-augmented discrete geodesics between two latent prototypes.

A path is a chain of latent waypoints ``z_0 .. z_N`` with pinned endpoints. Its
energy is the squared chord length of the decoded clamped log-probability
grids, plus ``lam`` times the summed potential of those grids, plus ``mu``
times the squared latent chord length. Interior waypoints are optimised with
AdamW and a reduce-on-plateau learning-rate schedule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decoders import DecoderModel, argmax_peptides

DENSITY = 90.0
THETA_POT = 5.0
EXCLUSION = 0.2


@dataclass
class GeodesicPath:
    waypoints: np.ndarray
    lam: float = 0.0
    mu: float = 0.0

    @property
    def N(self) -> int:
        return len(self.waypoints) - 1


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-5
    lr_factor: float = 0.8
    patience: int = 50
    threshold: float = 1e-6
    max_steps: int = 2000
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8


@dataclass
class PathReport:
    latent_length: float
    ambient_length: float
    peptide_path: list[str]
    potential_sum: float
    seeds: list[str]
    wells: list[str]
    energy_trace: list[float] = field(default_factory=list)

    def row(self) -> dict:
        """The six summary metrics as a flat mapping."""
        return {"latent_length": self.latent_length, "ambient_length": self.ambient_length,
                "peptide_path_length": len(self.peptide_path), "potential": self.potential_sum,
                "seeds": len(self.seeds), "wells": len(self.wells)}


def init_path(z_a, z_b, density: float = DENSITY, lam: float = 0.0, mu: float = 0.0) -> GeodesicPath:
    z_a, z_b = np.asarray(z_a, dtype=float), np.asarray(z_b, dtype=float)
    dist = float(np.linalg.norm(z_b - z_a))
    if dist == 0:
        raise ValueError("endpoints coincide")
    N = max(1, int(math.floor(density * dist)))
    t = np.arange(N + 1)[:, None] / N
    Z = (1 - t) * z_a + t * z_b
    Z[-1] = z_b
    return GeodesicPath(Z, lam, mu)


def _grids(model: DecoderModel, Z) -> np.ndarray:
    return model.log_grid(Z).reshape(len(Z), -1)


def path_energy(model: DecoderModel, path: GeodesicPath, potential=None, Z=None):
    """``(total, kinetic, potential_term, latent_reg)`` of a path."""
    Z = path.waypoints if Z is None else Z
    X = _grids(model, Z)
    kinetic = float(np.sum(np.diff(X, axis=0) ** 2))
    pot = float(np.sum(potential.value(X))) if potential is not None else 0.0
    reg = float(np.sum(np.diff(Z, axis=0) ** 2))
    if not math.isfinite(pot):
        raise FloatingPointError("non-finite potential")
    return kinetic + path.lam * pot + path.mu * reg, kinetic, pot, reg


def _chain_diff(Y) -> np.ndarray:
    # gradient of sum ||Y_{k+1} - Y_k||^2 with respect to each Y_k
    D = np.diff(Y, axis=0)
    G = np.zeros_like(Y)
    G[:-1] -= 2 * D
    G[1:] += 2 * D
    return G


def energy_and_gradient(model: DecoderModel, path: GeodesicPath, potential=None, Z=None):
    """Total energy and its analytic gradient with respect to every waypoint."""
    Z = path.waypoints if Z is None else Z
    X, pullback = model.log_grid_with_vjp(Z)
    gX = _chain_diff(X)
    total = float(np.sum(np.diff(X, axis=0) ** 2))
    if potential is not None and path.lam:
        total += path.lam * float(np.sum(potential.value(X)))
        gX = gX + path.lam * potential.grad(X)
    if path.mu:
        total += path.mu * float(np.sum(np.diff(Z, axis=0) ** 2))
    return total, pullback(gX) + path.mu * _chain_diff(Z)


def energy_gradient(model: DecoderModel, path: GeodesicPath, potential=None, Z=None) -> np.ndarray:
    return energy_and_gradient(model, path, potential, Z)[1]


def optimize_path(model: DecoderModel, path: GeodesicPath, potential=None,
                  config: OptimConfig = OptimConfig()) -> tuple[GeodesicPath, list[float]]:
    """AdamW on interior waypoints; returns the lowest-energy iterate and the energy trace.

    The trace holds the energy of the initial path and of each of the
    ``max_steps`` updated paths.
    """
    Z = path.waypoints.copy()
    interior = np.zeros((len(Z), 1), dtype=bool)
    interior[1:-1] = True
    m = np.zeros_like(Z)
    v = np.zeros_like(Z)
    b1, b2 = config.betas
    lr = config.lr
    best_Z, best_E = Z.copy(), math.inf
    plateau_best, bad = math.inf, 0
    trace: list[float] = []
    for step in range(config.max_steps + 1):
        energy, g = energy_and_gradient(model, path, potential, Z)
        if not (math.isfinite(energy) and np.all(np.isfinite(g))):
            break
        trace.append(energy)
        if energy < best_E:
            best_Z, best_E = Z.copy(), energy
        if energy < plateau_best - config.threshold * abs(plateau_best):
            plateau_best, bad = energy, 0
        else:
            bad += 1
            if bad > config.patience:
                lr *= config.lr_factor
                bad = 0
        if step == config.max_steps:
            break
        t = step + 1
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        upd = (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + config.adam_eps) + config.weight_decay * Z
        Z = Z - lr * np.where(interior, upd, 0.0)
    # endpoints are never touched, so copy them bitwise from the input
    best_Z[0], best_Z[-1] = path.waypoints[0], path.waypoints[-1]
    return GeodesicPath(best_Z, path.lam, path.mu), trace


def decode_path(model: DecoderModel, path: GeodesicPath) -> list[str]:
    out: list[str] = []
    for p in argmax_peptides(model, path.waypoints):
        if not out or out[-1] != p:
            out.append(p)
    return out


def find_seeds_wells(values, theta_pot: float = THETA_POT, exclusion_frac: float = EXCLUSION):
    """Indices of seeds and wells along a peptide path given per-peptide potentials.

    Only indices in ``[ceil(f N'), floor((1 - f) N')]`` are considered; a seed
    has potential ``<= theta_pot`` and a well is a seed that is a strict local
    minimum strictly inside that window.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 5:
        return [], []
    lo = int(math.ceil(exclusion_frac * n))
    hi = min(int(math.floor((1 - exclusion_frac) * n)), n - 1)
    seeds = [k for k in range(lo, hi + 1) if values[k] <= theta_pot]
    wells = [k for k in seeds if lo < k < hi and values[k] < values[k - 1] and values[k] < values[k + 1]]
    return seeds, wells


def path_metrics(model: DecoderModel, path: GeodesicPath, potential, theta_pot: float = THETA_POT,
                 exclusion_frac: float = EXCLUSION, trace=()) -> PathReport:
    Z = path.waypoints
    X = _grids(model, Z)
    peptides = decode_path(model, path)
    pvals = [potential.peptide_value(p, model.alphabet) for p in peptides]
    seeds, wells = find_seeds_wells(pvals, theta_pot, exclusion_frac)
    return PathReport(
        latent_length=float(np.sum(np.linalg.norm(np.diff(Z, axis=0), axis=1))),
        ambient_length=float(np.sum(np.linalg.norm(np.diff(X, axis=0), axis=1))),
        peptide_path=peptides,
        potential_sum=float(np.sum(potential.value(X))),
        seeds=[peptides[k] for k in seeds],
        wells=[peptides[k] for k in wells],
        energy_trace=list(trace),
    )


def pogs(model: DecoderModel, z_a, z_b, potential, lam: float = 0.0, mu: float = 0.0,
         density: float = DENSITY, config: OptimConfig = OptimConfig(), optimize: bool = True,
         theta_pot: float = THETA_POT) -> PathReport:
    """Build, optionally optimise, and summarise one path."""
    path = init_path(z_a, z_b, density, lam, mu)
    trace: list[float] = []
    if optimize:
        path, trace = optimize_path(model, path, potential, config)
    return path_metrics(model, path, potential, theta_pot, trace=trace)
