"""Local-enumeration Bayesian optimisation over peptides (minimisation).

Every outer iteration grows the candidate pool by local enumeration around the
current peptide, fits the Tanimoto GP to all evaluations so far, restricts the
pool to an edit-distance trust region around the incumbent and evaluates up to
``k_robot`` log-EI maximisers, each selection knocking out its own
``d_robot``-neighbourhood.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .decoders import DecoderModel
from .enumeration import EnumParams, local_enumeration
from .surrogate import gp_fit, gp_posterior_many, levenshtein_many, log_ei_from_moments

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LeboParams:
    budget: int = 200
    d_trust: int = 2
    k_robot: int = 3
    d_robot: int = 2
    kernel_variance: float = 1.0
    noise: float = 1e-6
    max_stall: int = 10

    def __post_init__(self):
        if self.k_robot < 1 or self.budget < self.k_robot:
            raise ValueError("need k_robot >= 1 and budget >= k_robot")
        if self.d_trust < 0 or self.d_robot < 0:
            raise ValueError("distances must be nonnegative")


@dataclass
class LeboResult:
    best: str
    best_value: float
    # rows of (iteration, peptide, value, best_so_far); iteration 0 is the seed
    history: list = field(default_factory=list)
    relaxed: list = field(default_factory=list)

    @property
    def calls(self) -> int:
        return len(self.history)


def _select(gp, pool: list[str], best_value: float) -> tuple[np.ndarray, list[str]]:
    """Candidates sorted by decreasing log-EI, ties broken lexicographically."""
    pool = sorted(pool)
    mu, var = gp_posterior_many(gp, pool)
    acq = log_ei_from_moments(mu, var, best_value)
    order = np.lexsort((np.arange(len(pool)), -acq))
    return acq[order], [pool[i] for i in order]


def lebo(oracle, model: DecoderModel, p_seed: str, params: LeboParams = LeboParams(),
         enum: EnumParams = EnumParams(), run_seed: int = 0) -> LeboResult:
    """Minimise ``oracle`` starting from ``p_seed``; at most ``budget + 1`` oracle calls."""
    seed_value = float(oracle(p_seed))
    evaluated = {p_seed: seed_value}
    records = [(p_seed, seed_value)]
    res = LeboResult(p_seed, seed_value, [(0, p_seed, seed_value, seed_value)])
    p_current = p_seed
    pool: set[str] = set()
    # edit distances of pool members to the incumbent, refreshed when it changes
    dist: dict[str, int] = {}
    dist_anchor = res.best
    calls, iteration, stall = 0, 0, 0
    running = seed_value
    while calls + params.k_robot <= params.budget and stall < params.max_stall:
        iteration += 1
        pool |= local_enumeration(model, p_current, enum, run_seed=hash_seed(run_seed, iteration))
        if dist_anchor != res.best:
            dist, dist_anchor = {}, res.best
        fresh = [p for p in pool if p not in dist]
        dist.update(zip(fresh, levenshtein_many(res.best, fresh).tolist()))
        gp = gp_fit(records, params.kernel_variance, params.noise)
        trust = [p for p in pool if p not in evaluated and dist[p] <= params.d_trust]
        if not trust:
            stall += 1
            continue
        _, ranked = _select(gp, trust, res.best_value)
        alive = list(ranked)
        chosen: list[tuple[str, float]] = []
        for _ in range(params.k_robot):
            if not alive:
                # robot filter emptied the region: fall back to unfiltered ranking
                alive = [p for p in ranked if p not in evaluated]
                if not alive:
                    break
                res.relaxed.append((iteration, len(chosen)))
                log.info("iteration %d: trust region exhausted by diversity filter, relaxing d_robot", iteration)
            p = alive[0]
            v = float(oracle(p))
            calls += 1
            evaluated[p] = v
            records.append((p, v))
            chosen.append((p, v))
            running = min(running, v)
            res.history.append((iteration, p, v, running))
            rest = alive[1:]
            alive = [q for q, dd in zip(rest, levenshtein_many(p, rest)) if dd > params.d_robot]
        if not chosen:
            stall += 1
            continue
        stall = 0
        p_current, v_current = min(chosen, key=lambda t: (t[1], t[0]))
        if v_current < res.best_value:
            res.best, res.best_value = p_current, v_current
    return res


def hash_seed(run_seed: int, iteration: int) -> int:
    """Deterministic enumeration seed for one outer iteration of one run."""
    return int(np.random.default_rng([int(run_seed), int(iteration), 3]).integers(2**31))
