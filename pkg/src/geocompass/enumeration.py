"""Local candidate enumeration around a seed peptide.

Each trajectory encodes the seed, collects tangent mutations there, then takes
single adaptive walk steps, rebuilding the stable chart at every new point and
collecting the decoded peptide plus its tangent mutations.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .decoders import DecoderModel, argmax_peptide, encode
from .manifold import DegenerateChart, build_chart
from .mutang import DEFAULT_CAP, DEFAULT_THETA, mutang
from .walk import WalkParams, path_rng, sorbes_se

WALK_KINDS = ("sorbes", "euclidean", "none")


@dataclass(frozen=True)
class EnumParams:
    kappa_walk: float = 0.01
    kappa_mut: float = 1e-6
    M: int = 10
    T_walk: float = 0.1
    eps: float = 0.1
    theta_mut: float = DEFAULT_THETA
    cap: int = DEFAULT_CAP
    delta_max: float = 0.5
    rho: float = 0.05
    eps_fd: float = 0.05
    radius: float = 1.0
    alpha: float = 0.99
    walk: str = "sorbes"
    mutate: bool = True
    max_steps: int = 1000

    def __post_init__(self):
        if self.M < 0 or self.cap < 1 or self.max_steps < 1:
            raise ValueError("M must be >= 0, cap and max_steps >= 1")
        if min(self.kappa_walk, self.kappa_mut) < 0 or min(self.T_walk, self.eps, self.theta_mut) <= 0:
            raise ValueError("thresholds must be nonnegative and T_walk, eps, theta_mut positive")
        if self.walk not in WALK_KINDS:
            raise ValueError(f"walk must be one of {WALK_KINDS}")

    def walk_params(self) -> WalkParams:
        return WalkParams(kappa=self.kappa_walk, eps=self.eps, T=self.T_walk, alpha=self.alpha,
                          delta_max=self.delta_max, rho=self.rho, step_max=1, radius=self.radius,
                          eps_fd=self.eps_fd)


def _mutants(model, z, params: EnumParams, seed: int) -> set[str]:
    if not params.mutate:
        return set()
    return mutang(model, z, params.kappa_mut, params.theta_mut, params.cap, params.eps_fd, seed)


def trajectory(model: DecoderModel, z0, params: EnumParams, rng: np.random.Generator, seed: int = 0) -> set[str]:
    """Candidates visited by one trajectory starting at latent ``z0``."""
    found = _mutants(model, z0, params, seed)
    if params.walk == "none":
        return found
    wp = params.walk_params()
    z, t, steps = np.asarray(z0, dtype=float), 0.0, 0
    # a step is taken only while a full nominal step fits in the remaining budget
    while t + params.eps**2 <= params.T_walk * (1 + 1e-12) and steps < params.max_steps:
        if params.walk == "euclidean":
            z = z + params.eps * rng.standard_normal(len(z))
            sigma = params.eps**2
        else:
            try:
                chart = build_chart(model, z, wp.kappa, wp.radius, wp.alpha, wp.eps_fd)
            except DegenerateChart:
                break
            tr = sorbes_se(model, z, wp, rng, chart=chart)
            if tr.stopped:
                break
            z, sigma = tr.end, tr.sigma
        # diffusion time accumulates sigma itself (it already carries eps**2 units)
        t += sigma
        steps += 1
        found.add(argmax_peptide(model, z))
        found |= _mutants(model, z, params, seed)
    return found


def local_enumeration(model: DecoderModel, p_seed: str, params: EnumParams = EnumParams(),
                      run_seed: int = 0, z_seed=None) -> set[str]:
    """Union of ``M`` trajectory candidate sets plus the seed itself.

    Trajectory ``m`` draws from ``path_rng(run_seed, m)``, so the result for
    ``M`` trajectories is a subset of the result for ``M + 1``.
    """
    out = {p_seed}
    if params.M == 0:
        return out
    z0 = encode(model, p_seed) if z_seed is None else np.asarray(z_seed, dtype=float)
    for m in range(params.M):
        out |= trajectory(model, z0, params, path_rng(run_seed, m), seed=run_seed)
    return out


def ablation(params: EnumParams, variant: str) -> EnumParams:
    """Named enumeration variants used by the benchmark."""
    table = {
        "lebo": {},
        "euclidean": {"walk": "euclidean"},
        "no-mutation": {"mutate": False},
        "no-walk": {"walk": "none"},
    }
    if variant not in table:
        raise ValueError(f"unknown variant {variant!r}")
    return replace(params, **table[variant])
