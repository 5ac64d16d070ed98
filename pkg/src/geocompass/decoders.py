"""Smooth toy decoders, finite-difference Jacobians and an encode facility.

Every decoder maps a latent batch ``z`` of shape ``(..., d)`` to a grid of shape
``(..., L, A)``. Probability-mode decoders apply a row softmax to their scores;
logit-mode decoders (the sphere and the affine ``flat-linear`` variant) return
their scores unchanged and are used for geometry tests only.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy.optimize import minimize

from .alphabet import DEFAULT_ALPHABET, Alphabet

LOG_FLOOR = float(np.log(1e-12))
ENCODE_REG = 1e-3


def softmax(s, axis=-1):
    e = np.exp(s - np.max(s, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(s, axis=-1):
    t = s - np.max(s, axis=axis, keepdims=True)
    return t - np.log(np.sum(np.exp(t), axis=axis, keepdims=True))


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class EncodeError(RuntimeError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DecoderModel:
    d: int
    L: int
    alphabet: Alphabet = field(default=DEFAULT_ALPHABET, kw_only=True)
    seed: int | None = field(default=None, kw_only=True)

    kind: ClassVar[str] = ""
    mode: ClassVar[str] = "probability"

    @property
    def A(self) -> int:
        return self.alphabet.size

    @property
    def ambient_dim(self) -> int:
        return self.L * self.A

    def _check(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 0 or z.shape[-1] != self.d:
            raise DimensionError(f"expected latent dimension {self.d}, got shape {z.shape}")
        return z

    def scores(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decode(self, z) -> np.ndarray:
        s = self.scores(self._check(z))
        return softmax(s, axis=-1) if self.mode == "probability" else s

    def log_grid(self, z) -> np.ndarray:
        """Clamped log-probabilities (probability mode) or raw scores (logit mode)."""
        s = self.scores(self._check(z))
        if self.mode == "probability":
            return np.maximum(log_softmax(s, axis=-1), LOG_FLOOR)
        return s

    def log_grid_with_vjp(self, Z):
        """Flattened ``log_grid`` at a batch ``Z`` and its batched pullback ``g -> g @ J``."""
        Z = np.atleast_2d(self._check(Z))
        s = self.scores(Z)
        n = len(Z)
        if self.mode != "probability":
            return s.reshape(n, -1), lambda g: self.score_vjp(Z, np.asarray(g).reshape(n, -1))
        logp = log_softmax(s, axis=-1)
        live = logp > LOG_FLOOR
        P = np.exp(logp)

        def pullback(g):
            g = np.where(live, np.asarray(g, dtype=float).reshape(s.shape), 0.0)
            gs = g - P * np.sum(g, axis=-1, keepdims=True)
            return self.score_vjp(Z, gs.reshape(n, -1))

        return np.maximum(logp, LOG_FLOOR).reshape(n, -1), pullback

    def score_jacobian(self, z: np.ndarray) -> np.ndarray:
        """d scores / dz for a single latent, shape ``(L*A, d)``."""
        raise NotImplementedError

    def score_vjp(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Batched ``g @ d scores/dz`` with ``g`` of shape ``(n, L*A)``."""
        return np.stack([gi @ self.score_jacobian(zi) for zi, gi in zip(z, g)])

    def jacobian(self, z) -> np.ndarray:
        """Analytic Jacobian of the flattened decoder output at a single ``z``."""
        z = self._check(z)
        Js = self.score_jacobian(z)
        if self.mode == "logit":
            return Js
        p = self.decode(z)
        Js = Js.reshape(self.L, self.A, self.d)
        # row softmax: dp = diag(p) ds - p (p . ds)
        out = p[:, :, None] * (Js - np.einsum("la,lad->ld", p, Js)[:, None, :])
        return out.reshape(self.ambient_dim, self.d)

    def vjp(self, z, g, space: str = "prob") -> np.ndarray:
        """Vector-Jacobian product of ``decode_flat`` (``space='prob'``) or of the
        flattened ``log_grid`` (``space='log'``), batched over rows of ``z``."""
        z = np.atleast_2d(self._check(z))
        g = np.atleast_2d(np.asarray(g, dtype=float)).reshape(len(z), self.L, self.A)
        if self.mode == "probability":
            s = self.scores(z)
            if space == "prob":
                p = softmax(s, axis=-1)
                gs = p * (g - np.sum(g * p, axis=-1, keepdims=True))
            elif space == "log":
                logp = log_softmax(s, axis=-1)
                g = np.where(logp > LOG_FLOOR, g, 0.0)
                gs = g - np.exp(logp) * np.sum(g, axis=-1, keepdims=True)
            else:
                raise ValueError(f"unknown space {space!r}")
        else:
            gs = g
        return self.score_vjp(z, gs.reshape(len(z), -1))

    def analytic_encode(self, peptide: str):
        return None

    def layers(self) -> list[np.ndarray]:
        return []

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        layers = []
        for m in self.layers():
            m = np.atleast_2d(m) if m.ndim == 2 else m.reshape(-1, 1)
            layers.append({"rows": int(m.shape[0]), "cols": int(m.shape[1]),
                           "data": [float(x) for x in m.ravel()]})
        out = {"kind": self.kind, "d": self.d, "L": self.L, "A": self.A,
               "seed": self.seed, "layers": layers}
        if self.alphabet != DEFAULT_ALPHABET:
            out["residues"] = self.alphabet.residues
            out["pad"] = self.alphabet.pad
        params = self.params()
        if params:
            out["params"] = params
        return out


@dataclass(frozen=True, eq=False)
class FlatLinear(DecoderModel):
    """Affine scores ``W z + b``; row softmax in probability mode, identity in logit mode."""

    W: np.ndarray = field(kw_only=True)
    b: np.ndarray = field(kw_only=True)
    output: str = field(default="probability", kw_only=True)

    kind: ClassVar[str] = "flat-linear"

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(self.W))
        object.__setattr__(self, "b", _frozen(np.ravel(self.b)))
        if self.W.shape != (self.ambient_dim, self.d) or self.b.shape != (self.ambient_dim,):
            raise DimensionError("flat-linear weight shapes do not match (L*A, d)")
        if self.output not in ("probability", "logit"):
            raise ValueError(f"unknown output {self.output!r}")

    @property
    def mode(self):
        return self.output

    def scores(self, z):
        s = z @ self.W.T + self.b
        return s.reshape(*z.shape[:-1], self.L, self.A)

    def score_jacobian(self, z):
        return self.W.copy()

    def score_vjp(self, z, g):
        return g @ self.W

    def analytic_encode(self, peptide):
        # logit mode is affine, so the least-squares encoder is exact
        if self.output != "logit":
            return None
        target = self.alphabet.onehot(peptide, self.L).ravel()
        return np.linalg.lstsq(self.W, target - self.b, rcond=None)[0]

    def layers(self):
        return [self.W, self.b]

    def params(self):
        return {"output": self.output}


@dataclass(frozen=True, eq=False)
class ToyMLP(DecoderModel):
    """One tanh hidden layer, optional pad logit growing with ``|z|^2``.

    Scores are ``W2 tanh(W1 z + b1) + b2`` reshaped to ``(L, A)``; when
    ``pad_gain > 0`` the pad column of row ``l`` additionally receives
    ``pad_gain * (|z|^2 - pad_offsets[l])``.
    """

    W1: np.ndarray = field(kw_only=True)
    b1: np.ndarray = field(kw_only=True)
    W2: np.ndarray = field(kw_only=True)
    b2: np.ndarray = field(kw_only=True)
    pad_gain: float = field(default=0.0, kw_only=True)
    pad_offsets: np.ndarray | None = field(default=None, kw_only=True)

    kind: ClassVar[str] = "toy-mlp"

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "b1", _frozen(np.ravel(self.b1)))
        object.__setattr__(self, "b2", _frozen(np.ravel(self.b2)))
        H = self.W1.shape[0]
        if self.W1.shape != (H, self.d) or self.W2.shape != (self.ambient_dim, H):
            raise DimensionError("toy-mlp weight shapes inconsistent with (d, L, A)")
        offs = np.zeros(self.L) if self.pad_offsets is None else self.pad_offsets
        object.__setattr__(self, "pad_offsets", _frozen(np.ravel(offs)))

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def _hidden(self, z):
        return np.tanh(z @ self.W1.T + self.b1)

    def scores(self, z):
        s = (self._hidden(z) @ self.W2.T + self.b2).reshape(*z.shape[:-1], self.L, self.A)
        if self.pad_gain:
            r2 = np.sum(z * z, axis=-1)[..., None]
            s[..., self.alphabet.pad_index] += self.pad_gain * (r2 - self.pad_offsets)
        return s

    def score_jacobian(self, z):
        h = self._hidden(z)
        J = (self.W2 * (1.0 - h * h)) @ self.W1
        if self.pad_gain:
            J = J.reshape(self.L, self.A, self.d)
            J[:, self.alphabet.pad_index, :] += 2.0 * self.pad_gain * z
            J = J.reshape(self.ambient_dim, self.d)
        return J

    def score_vjp(self, z, g):
        h = self._hidden(z)
        out = ((g @ self.W2) * (1.0 - h * h)) @ self.W1
        if self.pad_gain:
            gpad = g.reshape(len(z), self.L, self.A)[:, :, self.alphabet.pad_index].sum(axis=1)
            out = out + 2.0 * self.pad_gain * gpad[:, None] * z
        return out

    def layers(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def params(self):
        if not self.pad_gain:
            return {}
        return {"pad_gain": self.pad_gain, "pad_offsets": [float(x) for x in self.pad_offsets]}


def _stereo(u):
    s = np.sum(u * u, axis=-1, keepdims=True)
    return np.concatenate([2.0 * u, s - 1.0], axis=-1) / (1.0 + s)


@dataclass(frozen=True, eq=False)
class Sphere(DecoderModel):
    """Round 2-sphere of radius ``radius`` centred at ``center`` in the first three
    ambient coordinates; all other coordinates are zero.

    The latent plane is warped by ``u = z (1 + warp |z|^2)`` and sent to the sphere
    by inverse stereographic projection (``z = 0`` lands on the south pole). With
    ``warp = 0`` the chart is conformal; a positive warp makes it non-conformal,
    so coordinate Christoffel symbols carry a nonzero contracted drift.
    """

    radius: float = field(default=1.0, kw_only=True)
    center: tuple = field(default=(0.0, 0.0, 0.0), kw_only=True)
    warp: float = field(default=0.0, kw_only=True)

    kind: ClassVar[str] = "sphere"
    mode: ClassVar[str] = "logit"

    def __post_init__(self):
        if self.d != 2:
            raise DimensionError("sphere decoder has a 2-dimensional latent space")
        if self.ambient_dim < 3:
            raise DimensionError("sphere decoder needs at least 3 ambient coordinates")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def _u(self, z):
        return z * (1.0 + self.warp * np.sum(z * z, axis=-1, keepdims=True))

    def embed(self, z) -> np.ndarray:
        """Points on the sphere in R^3."""
        z = self._check(z)
        return np.asarray(self.center) + self.radius * _stereo(self._u(z))

    def scores(self, z):
        out = np.zeros((*z.shape[:-1], self.ambient_dim))
        out[..., :3] = self.embed(z)
        return out.reshape(*z.shape[:-1], self.L, self.A)

    def _parts(self, z):
        u = self._u(z)
        s = float(u @ u)
        D = 1.0 + s
        Ju = (1.0 + self.warp * float(z @ z)) * np.eye(2) + 2.0 * self.warp * np.outer(z, z)
        Js = np.zeros((3, 2))
        Js[:2] = 2.0 * np.eye(2) / D - 4.0 * np.outer(u, u) / D**2
        Js[2] = 4.0 * u / D**2
        return u, D, Ju, Js

    def score_jacobian(self, z):
        z = np.asarray(z, dtype=float)
        _, _, Ju, Js = self._parts(z)
        J = np.zeros((self.ambient_dim, 2))
        J[:3] = self.radius * Js @ Ju
        return J

    def hessian_vv(self, z, v) -> np.ndarray:
        """Second directional derivative of the flattened output along ``v``."""
        z = self._check(z)
        v = np.asarray(v, dtype=float)
        u, D, Ju, Js = self._parts(z)
        a = Ju @ v
        ua, aa = float(u @ a), float(a @ a)
        sig2 = np.empty(3)
        sig2[:2] = -8.0 * a * ua / D**2 - 4.0 * u * aa / D**2 + 16.0 * u * ua**2 / D**3
        sig2[2] = 4.0 * aa / D**2 - 16.0 * ua**2 / D**3
        upp = self.warp * (4.0 * v * float(z @ v) + 2.0 * z * float(v @ v))
        out = np.zeros(self.ambient_dim)
        out[:3] = self.radius * (sig2 + Js @ upp)
        return out

    def params(self):
        return {"radius": self.radius, "center": list(self.center), "warp": self.warp}


# ---------------------------------------------------------------- operations


def decode(model: DecoderModel, z) -> np.ndarray:
    return model.decode(z)


def decode_flat(model: DecoderModel, z) -> np.ndarray:
    g = model.decode(z)
    return g.reshape(*g.shape[:-2], model.ambient_dim)


def unflatten(model: DecoderModel, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != model.ambient_dim:
        raise DimensionError(f"ambient vector must have length {model.ambient_dim}")
    return x.reshape(*x.shape[:-1], model.L, model.A)


def grid_peptide(grid, alphabet: Alphabet = DEFAULT_ALPHABET) -> str:
    """Row-wise argmax (lowest index wins ties), truncated at the first pad."""
    return alphabet.canonical(np.argmax(np.asarray(grid), axis=-1))


def argmax_peptide(model: DecoderModel, z) -> str:
    return grid_peptide(model.decode(z), model.alphabet)


def argmax_peptides(model: DecoderModel, Z) -> list[str]:
    idx = np.argmax(model.decode(np.atleast_2d(Z)), axis=-1)
    return [model.alphabet.canonical(row) for row in idx]


def jacobian_fd(model: DecoderModel, z, eps_fd: float = 0.05, basis=None) -> np.ndarray:
    """Forward-difference Jacobian of ``decode_flat`` at ``z``.

    With ``basis`` (a ``d x k`` matrix) the derivative is taken along its columns,
    giving the restricted Jacobian ``J @ basis``. All ``k + 1`` decoder
    evaluations happen in a single batched call.
    """
    if eps_fd <= 0:
        raise ValueError("eps_fd must be positive")
    z = model._check(z)
    B = np.eye(model.d) if basis is None else np.asarray(basis, dtype=float)
    pts = np.vstack([z[None, :], z[None, :] + eps_fd * B.T])
    F = decode_flat(model, pts)
    if not np.all(np.isfinite(F)):
        raise NonFiniteError("decoder returned non-finite values")
    return ((F[1:] - F[0]) / eps_fd).T


def encode(model: DecoderModel, peptide: str, maxiter: int = 300, restarts: int = 4) -> np.ndarray:
    """Latent code maximising the decoded log-likelihood of ``peptide``.

    Uses the model's closed-form encoder when it has one. Otherwise minimises
    the cross-entropy to ``onehot(peptide)`` plus a small ``|z|^2`` penalty with
    L-BFGS, from the origin and then from ``restarts`` standard-normal starts
    seeded by the peptide. The first solution that decodes back to ``peptide``
    wins; failing that, the lowest loss.
    """
    peptide = model.alphabet.canonical(peptide)
    z = model.analytic_encode(peptide)
    if z is not None:
        return np.asarray(z, dtype=float)
    target = model.alphabet.onehot(peptide, model.L).ravel()

    def fun(z):
        lg = model.log_grid(z[None, :])[0].ravel()
        g = -model.vjp(z[None, :], target[None, :], space="log")[0]
        return float(-lg @ target + ENCODE_REG * z @ z), g + 2.0 * ENCODE_REG * z

    rng = np.random.default_rng(zlib.crc32(peptide.encode()))
    starts = np.vstack([np.zeros(model.d), rng.standard_normal((restarts, model.d))])
    best = None
    for z0 in starts:
        res = minimize(fun, z0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter})
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            continue
        if argmax_peptide(model, res.x) == peptide:
            return res.x
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise EncodeError(f"encoding {peptide!r} diverged")
    return best.x


# ----------------------------------------------------------------- factories


def make_flat_linear(d: int, L: int, *, alphabet: Alphabet = DEFAULT_ALPHABET, seed: int = 0,
                     scale: float = 1.0, output: str = "probability") -> FlatLinear:
    rng = np.random.default_rng(seed)
    LA = L * alphabet.size
    W = rng.normal(0.0, scale / np.sqrt(d), (LA, d))
    return FlatLinear(d, L, alphabet=alphabet, seed=seed, W=W, b=np.zeros(LA), output=output)


def linear_with_singular_values(svals, L: int = 1, *, alphabet: Alphabet = DEFAULT_ALPHABET,
                                seed: int = 0, d: int | None = None) -> FlatLinear:
    """Affine logit-mode decoder whose Jacobian has the given singular values."""
    svals = np.asarray(svals, dtype=float)
    d = len(svals) if d is None else d
    LA = L * alphabet.size
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.normal(size=(LA, d)))
    V, _ = np.linalg.qr(rng.normal(size=(d, d)))
    s = np.zeros(d)
    s[: len(svals)] = svals
    W = U @ np.diag(s) @ V.T
    return FlatLinear(d, L, alphabet=alphabet, seed=seed, W=W, b=np.zeros(LA), output="logit")


def make_toy_mlp(d: int = 8, L: int = 6, hidden: int = 16, *, alphabet: Alphabet = DEFAULT_ALPHABET,
                 seed: int = 42, in_scale: float = 1.0, out_scale: float = 1.0,
                 column_scales=None, pad_bias: float = 0.0) -> ToyMLP:
    """Random tanh MLP decoder; ``pad_bias`` shifts the pad score of every row."""
    rng = np.random.default_rng(seed)
    LA = L * alphabet.size
    W1 = rng.normal(0.0, in_scale / np.sqrt(d), (hidden, d))
    if column_scales is not None:
        W1 = W1 * np.asarray(column_scales, dtype=float)[None, :]
    b1 = rng.normal(0.0, 0.1, hidden)
    W2 = rng.normal(0.0, out_scale / np.sqrt(hidden), (LA, hidden))
    b2 = rng.normal(0.0, 0.5, LA)
    b2[alphabet.pad_index::alphabet.size] += pad_bias
    return ToyMLP(d, L, alphabet=alphabet, seed=seed, W1=W1, b1=b1, W2=W2, b2=b2)


def make_pad_growing_mlp(d: int = 16, L: int = 12, *, alphabet: Alphabet = DEFAULT_ALPHABET,
                         seed: int = 0, pad_gain: float = 4.0, out_scale: float = 4.0) -> ToyMLP:
    """Toy decoder whose pad probability grows with ``|z|``.

    Row ``l`` reads a single hidden unit, and later rows turn to pad at smaller
    radii, so short decoded peptides have many saturated rows.
    """
    rng = np.random.default_rng(seed)
    A = alphabet.size
    W1 = rng.normal(0.0, 1.0 / np.sqrt(d), (L, d))
    b1 = rng.normal(0.0, 0.1, L)
    W2 = np.zeros((L, A, L))
    for l in range(L):
        W2[l, :, l] = rng.normal(0.0, out_scale, A)
    W2[:, alphabet.pad_index, :] = 0.0
    b2 = rng.normal(0.0, 0.5, (L, A))
    chi = d  # mean of |z|^2 for standard normal latents
    offsets = np.linspace(chi + 2.0 * np.sqrt(2 * d), chi - 2.0 * np.sqrt(2 * d), L)
    return ToyMLP(d, L, alphabet=alphabet, seed=seed, W1=W1, b1=b1,
                  W2=W2.reshape(L * A, L), b2=b2.ravel(), pad_gain=pad_gain, pad_offsets=offsets)


def make_sphere(radius: float = 1.0, *, warp: float = 0.0, L: int = 1,
                alphabet: Alphabet = DEFAULT_ALPHABET, center=(0.0, 0.0, 0.0)) -> Sphere:
    return Sphere(2, L, alphabet=alphabet, radius=radius, warp=warp, center=tuple(center))


# ------------------------------------------------------------------ JSON i/o

_KINDS = {cls.kind: cls for cls in (FlatLinear, ToyMLP, Sphere)}


def _matrix(layer) -> np.ndarray:
    return np.asarray(layer["data"], dtype=float).reshape(layer["rows"], layer["cols"])


def model_from_dict(spec: dict) -> DecoderModel:
    kind = spec.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown decoder kind {kind!r}")
    alphabet = Alphabet(spec.get("residues", DEFAULT_ALPHABET.residues), spec.get("pad", DEFAULT_ALPHABET.pad))
    if spec.get("A", alphabet.size) != alphabet.size:
        raise ValueError(f"A={spec['A']} disagrees with alphabet size {alphabet.size}")
    d, L, seed = int(spec["d"]), int(spec["L"]), spec.get("seed")
    params = spec.get("params", {})
    layers = [_matrix(m) for m in spec.get("layers", [])]
    if kind == "flat-linear":
        W, b = layers
        return FlatLinear(d, L, alphabet=alphabet, seed=seed, W=W, b=b,
                          output=params.get("output", "probability"))
    if kind == "toy-mlp":
        W1, b1, W2, b2 = layers
        return ToyMLP(d, L, alphabet=alphabet, seed=seed, W1=W1, b1=b1, W2=W2, b2=b2,
                      pad_gain=float(params.get("pad_gain", 0.0)), pad_offsets=params.get("pad_offsets"))
    return Sphere(d, L, alphabet=alphabet, seed=seed, radius=float(params.get("radius", 1.0)),
                  center=tuple(params.get("center", (0.0, 0.0, 0.0))), warp=float(params.get("warp", 0.0)))


def save_model(model: DecoderModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)
        fh.write("\n")


def load_model(path) -> DecoderModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
