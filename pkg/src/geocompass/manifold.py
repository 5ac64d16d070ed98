"""Local kappa-stable charts built from a thin SVD of the decoder Jacobian.

A chart at ``z`` keeps the right-singular directions whose squared singular
value exceeds ``kappa``; intrinsic coordinates ``x`` map to latents as
``z + V @ x``. The restricted pullback metric at the centre is ``diag(sigma**2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoders import DecoderModel, NonFiniteError, decode_flat, jacobian_fd

OFF_CHART_TOL = 1e-8


class DegenerateChart(ValueError):
    """No singular value of the Jacobian passes the kappa threshold."""


@dataclass(frozen=True, eq=False)
class KappaChart:
    center: np.ndarray
    V: np.ndarray
    U: np.ndarray
    sigma: np.ndarray
    radius: float = 1.0
    kappa: float = 0.0
    alpha: float = 0.99

    @property
    def k(self) -> int:
        return len(self.sigma)

    @property
    def d(self) -> int:
        return len(self.center)

    def to_latent(self, x) -> np.ndarray:
        return self.center + np.asarray(x) @ self.V.T

    def coords(self, z) -> np.ndarray:
        return (np.asarray(z) - self.center) @ self.V


def _svd(J: np.ndarray):
    if not np.all(np.isfinite(J)):
        raise NonFiniteError("Jacobian has non-finite entries")
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    V = Vt.T
    # sign convention: first non-negligible entry of each V column is positive
    for j in range(V.shape[1]):
        col = V[:, j]
        i = int(np.argmax(np.abs(col) > 1e-12 * np.abs(col).max())) if np.any(col) else 0
        if col[i] < 0:
            V[:, j] = -col
            U[:, j] = -U[:, j]
    return U, s, V


def chart_from_jacobian(J, z, kappa: float, radius: float = 1.0, alpha: float = 0.99) -> KappaChart:
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    U, s, V = _svd(np.asarray(J, dtype=float))
    k = int(np.sum(s**2 > kappa))
    if k == 0:
        raise DegenerateChart(f"no singular value exceeds sqrt(kappa)={np.sqrt(kappa):.3g}")
    arr = lambda a: np.array(a, copy=True)  # noqa: E731
    return KappaChart(center=arr(np.asarray(z, dtype=float)), V=arr(V[:, :k]), U=arr(U[:, :k]),
                      sigma=arr(s[:k]), radius=float(radius), kappa=float(kappa), alpha=float(alpha))


def build_chart(model: DecoderModel, z, kappa: float, radius: float = 1.0, alpha: float = 0.99,
                eps_fd: float = 0.05, jacobian=None) -> KappaChart:
    """Kappa-stable chart at ``z``; raises :class:`DegenerateChart` when ``k = 0``.

    ``jacobian`` may be passed to reuse one Jacobian for several thresholds.
    """
    z = model._check(z)
    J = jacobian_fd(model, z, eps_fd) if jacobian is None else jacobian
    return chart_from_jacobian(J, z, kappa, radius, alpha)


def stable_dimension(model: DecoderModel, z, kappa: float, eps_fd: float = 0.05, jacobian=None) -> int:
    J = jacobian_fd(model, model._check(z), eps_fd) if jacobian is None else jacobian
    s = np.linalg.svd(J, compute_uv=False)
    return int(np.sum(s**2 > kappa))


def restricted_metric(chart: KappaChart) -> np.ndarray:
    return np.diag(chart.sigma**2)


def inside(chart: KappaChart, Z, alpha: float | None = None) -> np.ndarray:
    """Vectorised membership test for latents ``Z`` of shape ``(..., d)``."""
    alpha = chart.alpha if alpha is None else alpha
    D = np.asarray(Z, dtype=float) - chart.center
    x = D @ chart.V
    off = np.linalg.norm(D - x @ chart.V.T, axis=-1)
    return (np.linalg.norm(x, axis=-1) < alpha * chart.radius) & (off < OFF_CHART_TOL)


def contains(chart: KappaChart, z_query, alpha: float | None = None) -> bool:
    """True iff ``z_query`` lies in the open contracted domain ``W_z(alpha)``."""
    return bool(inside(chart, z_query, alpha))


def sample_unit_tangent(chart: KappaChart, rng: np.random.Generator) -> np.ndarray:
    """Latent direction with unit pullback norm, uniform over the metric sphere."""
    g = rng.standard_normal(chart.k)
    u = g / np.linalg.norm(g)
    return chart.V @ (u / chart.sigma)


def pullback_norm(chart: KappaChart, v) -> float:
    w = chart.V.T @ np.asarray(v) * chart.sigma
    return float(np.sqrt(w @ w))


def restricted_frames(model: DecoderModel, chart: KappaChart, X, eps_fd: float = 0.05):
    """SVD of the restricted Jacobian ``J(z + V x) @ V`` at chart points ``X``.

    Returns ``(F0, U, s, W)`` where ``F0`` holds the decoded points, ``U`` is
    ``(n, LA, k)``, ``s`` is ``(n, k)`` and ``W`` is ``(n, k, k)`` with
    ``J V = U diag(s) W^T``. Rows with ``x = 0`` reuse the chart's factors.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, k = X.shape
    Z = chart.to_latent(X)
    if not np.any(X):
        F0 = decode_flat(model, Z)
        U = np.broadcast_to(chart.U, (n, *chart.U.shape))
        s = np.broadcast_to(chart.sigma, (n, k))
        W = np.broadcast_to(np.eye(k), (n, k, k))
        return F0, U, s, W
    pts = Z[:, None, :] + np.concatenate([np.zeros((1, chart.d)), eps_fd * chart.V.T])[None]
    F = decode_flat(model, pts)
    if not np.all(np.isfinite(F)):
        raise NonFiniteError("decoder returned non-finite values")
    J = np.swapaxes(F[:, 1:] - F[:, :1], 1, 2) / eps_fd
    U, s, Wt = np.linalg.svd(J, full_matrices=False)
    return F[:, 0], U, s, np.swapaxes(Wt, 1, 2)
