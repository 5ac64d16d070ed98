"""Second-order Riemannian random walks on kappa-stable charts.

The walk state lives in the intrinsic coordinates of a chart fixed at the
starting latent. At each step a direction of unit pullback norm is drawn from
the metric at the *current* point, scaled by ``sqrt(k)``, and advanced with the
second-order Taylor expansion of the exponential map,

    x <- x + eps * v - curvature_coef * eps**2 * Gamma(x)[v, v],

with ``curvature_coef = 1/2`` by default and ``Gamma[v, v]`` estimated
extrinsically from a central second difference of the decoder. Paths that
leave the contracted chart domain are absorbed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .decoders import DecoderModel, NonFiniteError, decode_flat
from .manifold import KappaChart, build_chart, inside, restricted_frames

BISECTION_STEPS = 30


@dataclass(frozen=True)
class WalkParams:
    kappa: float = 0.01
    eps: float = 0.1
    T: float = 0.1
    alpha: float = 0.99
    delta_max: float = 0.5
    rho: float = 0.05
    step_max: int = 10_000
    radius: float = 1.0
    eps_fd: float = 0.05
    curvature_coef: float = 0.5
    order: int = 2

    def __post_init__(self):
        if self.kappa < 0 or self.eps <= 0 or self.T <= 0 or self.rho <= 0:
            raise ValueError("kappa must be >= 0 and eps, T, rho > 0")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.delta_max <= 0 or self.step_max < 1 or self.radius <= 0:
            raise ValueError("delta_max, step_max and radius must be positive")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")

    @property
    def n_steps(self) -> int:
        # small tolerance so that e.g. T = 0.09, eps = 0.1 gives 9 steps
        return int(np.floor(self.T / self.eps**2 * (1 + 1e-12)))


@dataclass
class WalkTrace:
    points: np.ndarray
    sigma: float = 0.0
    stopped: bool = False
    steps: int = 0

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


@dataclass
class WalkBatch:
    """Many independent paths from one start.

    ``points`` is ``(n, steps + 1, d)``; ``sigmas`` and ``stops`` hold the
    accumulated diffusion time and the absorbed flag after every step.
    """

    points: np.ndarray
    sigmas: np.ndarray
    stops: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return self.sigmas[:, -1]

    @property
    def stopped(self) -> np.ndarray:
        return self.stops[:, -1]

    @property
    def ends(self) -> np.ndarray:
        return self.points[:, -1]

    def trace(self, i: int) -> WalkTrace:
        return WalkTrace(self.points[i], float(self.sigma[i]), bool(self.stopped[i]), self.points.shape[1] - 1)


def path_rng(run_seed: int, index: int) -> np.random.Generator:
    """Independent, scheduling-free stream for trajectory ``index`` of a run."""
    return np.random.default_rng([int(run_seed), int(index)])


def _frame_apply(W, s, y):
    # W diag(1/s) y, batched
    return np.einsum("nij,nj->ni", W, y / s)


def christoffel_extrinsic(model: DecoderModel, chart: KappaChart, x, v, rho: float = 0.05,
                          frame=None, eps_fd: float = 0.05) -> np.ndarray:
    """Extrinsic estimate of ``Gamma(x)[v, v]`` in chart coordinates.

    The ambient acceleration of ``t -> Dec(z + V (x + t v))`` is taken by a
    central second difference with probe radius ``rho`` and pulled back with the
    pseudoinverse of the restricted Jacobian at ``x`` (the chart's ``U Sigma`` at
    the centre).
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(x) + rho * np.linalg.norm(v) > chart.radius:
        raise ValueError("probe leaves the chart domain")
    if frame is None:
        frame = restricted_frames(model, chart, x[None, :], eps_fd)
    F0, U, s, W = frame
    return _christoffel_batch(model, chart, x[None, :], v[None, :], rho, F0, U, s, W)[0]


def _christoffel_batch(model, chart, X, Vi, rho, F0, U, s, W):
    Z = chart.to_latent(X)
    dz = rho * (Vi @ chart.V.T)
    F = decode_flat(model, np.stack([Z + dz, Z - dz], axis=1))
    if not np.all(np.isfinite(F)):
        raise NonFiniteError("probe point outside decoder validity")
    a = (F[:, 0] - 2.0 * F0 + F[:, 1]) / rho**2
    return _frame_apply(W, s, np.einsum("nlk,nl->nk", U, a))


def _adaptive_eps(v, c, eps, coef, delta_max):
    """Largest step in (0, eps] whose update norm stays within ``delta_max``."""
    vv = np.sum(v * v, axis=1)
    vc = np.sum(v * c, axis=1)
    cc = np.sum(c * c, axis=1)

    def norm2(e):
        return e * e * vv - 2 * coef * e**3 * vc + coef**2 * e**4 * cc

    e = np.full(len(v), float(eps))
    bad = norm2(e) > delta_max**2
    if np.any(bad):
        lo, hi = np.zeros(bad.sum()), e[bad].copy()
        vv_, vc_, cc_ = vv[bad], vc[bad], cc[bad]
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            ok = mid * mid * vv_ - 2 * coef * mid**3 * vc_ + coef**2 * mid**4 * cc_ <= delta_max**2
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        e[bad] = lo
    return e


def _step(model, chart, X, active, g, params: WalkParams, adaptive: bool):
    """One vectorised walk step; returns ``(X_new, eps_used, exited)``."""
    k = chart.k
    F0, U, s, W = restricted_frames(model, chart, X, params.eps_fd)
    s = np.maximum(s, max(np.sqrt(params.kappa), 1e-12))
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    v = np.sqrt(k) * _frame_apply(W, s, u)
    if params.order == 2:
        c = _christoffel_batch(model, chart, X, v, params.rho, F0, U, s, W)
    else:
        c = np.zeros_like(v)
    if adaptive:
        e = _adaptive_eps(v, c, params.eps, params.curvature_coef, params.delta_max)
    else:
        e = np.full(len(X), params.eps)
    dx = e[:, None] * v - params.curvature_coef * (e * e)[:, None] * c
    X_new = np.where(active[:, None], X + dx, X)
    exited = active & ~inside(chart, chart.to_latent(X_new))
    return X_new, np.where(active, e, 0.0), exited


def _run(model, chart, noise, params: WalkParams, adaptive: bool):
    """Fixed-length walk for a batch; ``noise`` has shape ``(n, steps, k)``."""
    n, steps, _ = noise.shape
    X = np.zeros((n, chart.k))
    sigma = np.zeros(n)
    stopped = np.zeros(n, dtype=bool)
    xs, sig, stp = [X], [sigma], [stopped]
    for i in range(steps):
        X, e, exited = _step(model, chart, X, ~stopped, noise[:, i], params, adaptive)
        sigma = sigma + e * e
        stopped = stopped | exited
        xs.append(X)
        sig.append(sigma)
        stp.append(stopped)
    return np.stack(xs, axis=1), np.stack(sig, axis=1), np.stack(stp, axis=1)


def sorbes(model: DecoderModel, z, params: WalkParams, rng: np.random.Generator,
           chart: KappaChart | None = None) -> WalkTrace:
    """Fixed-step walk with ``floor(T / eps^2)`` iterations from ``z``."""
    if chart is None:
        chart = build_chart(model, z, params.kappa, params.radius, params.alpha, params.eps_fd)
    noise = rng.standard_normal((params.n_steps, chart.k))[None]
    X, sigma, stopped = _run(model, chart, noise, params, adaptive=False)
    return WalkTrace(chart.to_latent(X[0]), float(sigma[0, -1]), bool(stopped[0, -1]), params.n_steps)


def sorbes_paths(model: DecoderModel, z, params: WalkParams, n_paths: int, run_seed: int = 0,
                 chart: KappaChart | None = None, batch: int = 5000) -> WalkBatch:
    """``n_paths`` SORBES walks; path ``i`` equals ``sorbes(..., path_rng(run_seed, i))``."""
    if chart is None:
        chart = build_chart(model, z, params.kappa, params.radius, params.alpha, params.eps_fd)
    pts, sig, stp = [], [], []
    for start in range(0, n_paths, batch):
        idx = range(start, min(n_paths, start + batch))
        noise = np.stack([path_rng(run_seed, i).standard_normal((params.n_steps, chart.k)) for i in idx])
        X, sigma, stopped = _run(model, chart, noise, params, adaptive=False)
        pts.append(chart.to_latent(X))
        sig.append(sigma)
        stp.append(stopped)
    return WalkBatch(np.concatenate(pts), np.concatenate(sig), np.concatenate(stp))


def sorbes_se(model: DecoderModel, z, params: WalkParams, rng: np.random.Generator,
              chart: KappaChart | None = None) -> WalkTrace:
    """Adaptive-step walk: runs while ``sigma < T`` and ``steps < step_max``.

    Each step's size is the largest value in ``(0, eps]`` keeping the latent
    update norm within ``delta_max`` (the nominal ``eps`` is restored every step).
    """
    if chart is None:
        chart = build_chart(model, z, params.kappa, params.radius, params.alpha, params.eps_fd)
    X = np.zeros((1, chart.k))
    xs = [X[0]]
    sigma, stopped, step = 0.0, False, 0
    while sigma < params.T and step < params.step_max:
        g = rng.standard_normal(chart.k)[None]
        if not stopped:
            X, e, exited = _step(model, chart, X, np.ones(1, dtype=bool), g, params, adaptive=True)
            sigma += float(e[0]) ** 2
            stopped = bool(exited[0])
        xs.append(X[0])
        step += 1
    return WalkTrace(chart.to_latent(np.array(xs)), sigma, stopped, step)


def euclidean_walk(z, eps: float, T: float, rng: np.random.Generator) -> WalkTrace:
    """Isotropic Gaussian latent walk: ``floor(T / eps^2)`` steps of ``eps * N(0, I)``."""
    z = np.asarray(z, dtype=float)
    n = WalkParams(eps=eps, T=T).n_steps
    steps = eps * rng.standard_normal((n, len(z)))
    pts = np.vstack([z, z + np.cumsum(steps, axis=0)])
    return WalkTrace(pts, n * eps**2, False, n)


def first_order(params: WalkParams) -> WalkParams:
    """Same walk with the curvature correction removed."""
    return replace(params, order=1)


# -------------------------------------------------- analytic sphere reference


def brownian_reference(t: float, n_paths: int, fine_eps: float, rng: np.random.Generator,
                       start=(0.0, 0.0, -1.0), radius: float = 1.0, batch: int = 20000) -> np.ndarray:
    """Endpoints (in R^3) of geodesic random walks on the round sphere.

    Uses the exact exponential map with steps of length ``sqrt(2) * fine_eps``
    (so that time ``fine_eps**2`` elapses per step); converges to Brownian motion
    with generator half the Laplace-Beltrami operator as ``fine_eps -> 0``.
    """
    p0 = np.asarray(start, dtype=float)
    p0 = p0 / np.linalg.norm(p0)
    steps = int(round(t / fine_eps**2))
    ang = np.sqrt(2.0) * fine_eps / radius
    out = []
    for b in range(0, n_paths, batch):
        m = min(batch, n_paths - b)
        p = np.tile(p0, (m, 1))
        for _ in range(steps):
            g = rng.standard_normal((m, 3))
            g -= np.sum(g * p, axis=1, keepdims=True) * p
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            p = np.cos(ang) * p + np.sin(ang) * g
            p /= np.linalg.norm(p, axis=1, keepdims=True)
        out.append(p)
    return radius * np.concatenate(out)


def geodesic_radius(points, start, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Great-circle distance from ``start`` on a sphere of the given radius."""
    c = np.asarray(center, dtype=float)
    P = (np.atleast_2d(points) - c) / radius
    s = (np.asarray(start, dtype=float) - c) / radius
    cos = np.clip(P @ s / (np.linalg.norm(P, axis=1) * np.linalg.norm(s)), -1.0, 1.0)
    return radius * np.arccos(cos)
