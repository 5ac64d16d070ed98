"""Peptide GP surrogate: k-mer count fingerprints, MinMax Tanimoto kernel, log-EI."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import erfcx, ndtr

KMER_SIZES = (1, 2, 3)
LOG_EI_FLOOR = -1e30
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def fingerprint(peptide: str, sizes=KMER_SIZES) -> Counter:
    """Counts of every contiguous k-mer of ``peptide`` for k in ``sizes``."""
    return Counter(peptide[i:i + k] for k in sizes for i in range(len(peptide) - k + 1))


def tanimoto(a: dict, b: dict) -> float:
    """MinMax Tanimoto similarity of two count maps (two empty maps give 1)."""
    keys = set(a) | set(b)
    num = sum(min(a.get(f, 0), b.get(f, 0)) for f in keys)
    den = sum(max(a.get(f, 0), b.get(f, 0)) for f in keys)
    return 1.0 if den == 0 else num / den


class FingerprintIndex:
    """Sparse 0/1 unary expansion of count fingerprints.

    A count ``c`` of feature ``f`` becomes ones on features ``(f, 1) .. (f, c)``,
    so the sum of element-wise minima of two count vectors is the dot product of
    their expansions. This makes Gram blocks a single sparse product.
    """

    def __init__(self):
        self.vocab: dict[tuple[str, int], int] = {}

    def matrix(self, peptides) -> tuple[sp.csr_matrix, np.ndarray]:
        rows, cols = [], []
        totals = np.zeros(len(peptides))
        for r, p in enumerate(peptides):
            for f, c in fingerprint(p).items():
                totals[r] += c
                for j in range(1, c + 1):
                    cols.append(self.vocab.setdefault((f, j), len(self.vocab)))
                    rows.append(r)
        M = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(peptides), len(self.vocab)))
        return M, totals

    def gram(self, left, right) -> np.ndarray:
        A, ta = self.matrix(left)
        B, tb = self.matrix(right)
        n = max(A.shape[1], B.shape[1])
        A.resize((A.shape[0], n))
        B.resize((B.shape[0], n))
        num = (A @ B.T).toarray()
        den = ta[:, None] + tb[None, :] - num
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)


def tanimoto_gram(left, right) -> np.ndarray:
    return FingerprintIndex().gram(list(left), list(right))


@dataclass
class GPModel:
    peptides: list[str]
    values: np.ndarray
    kernel_variance: float
    noise: float
    mean: float
    scale: float
    chol: tuple = field(repr=False)
    alpha: np.ndarray = field(repr=False)


def gp_fit(records, kernel_variance: float = 1.0, noise: float = 1e-6) -> GPModel:
    """Exact GP on standardised values with a Tanimoto kernel.

    ``records`` is a sequence of ``(peptide, value)``. If the Cholesky
    factorisation fails the noise is raised tenfold once before giving up.
    """
    if len(records) == 0:
        raise ValueError("need at least one record")
    if kernel_variance <= 0 or noise <= 0:
        raise ValueError("kernel_variance and noise must be positive")
    peptides = [p for p, _ in records]
    y = np.array([v for _, v in records], dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite oracle value")
    mean = float(y.mean())
    std = float(y.std())
    scale = std if std > 0 else 1.0
    ys = (y - mean) / scale
    K = kernel_variance * tanimoto_gram(peptides, peptides)
    for attempt in range(2):
        try:
            chol = cho_factor(K + noise * np.eye(len(y)), lower=True)
            break
        except LinAlgError:
            if attempt:
                raise
            noise *= 10.0
    return GPModel(peptides, y, kernel_variance, noise, mean, scale, chol, cho_solve(chol, ys))


def gp_posterior_many(model: GPModel, peptides) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances (original units) at several peptides."""
    Ks = model.kernel_variance * tanimoto_gram(peptides, model.peptides)
    mu = Ks @ model.alpha
    v = cho_solve(model.chol, Ks.T)
    var = model.kernel_variance - np.sum(Ks * v.T, axis=1)
    return model.mean + model.scale * mu, np.maximum(var, 0.0) * model.scale**2


def gp_posterior(model: GPModel, peptide: str) -> tuple[float, float]:
    mu, var = gp_posterior_many(model, [peptide])
    return float(mu[0]), float(var[0])


def _log1mexp(x):
    # log(1 - exp(x)) for x < 0
    return np.where(x > -math.log(2), np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


def log_h(z):
    """``log(z * Phi(z) + phi(z))`` evaluated stably for all real ``z``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    mid = z > -1.0
    zm = z[mid]
    out[mid] = np.log(zm * ndtr(zm) + np.exp(-0.5 * zm * zm - _LOG_SQRT_2PI))
    lo = ~mid
    zl = z[lo]
    tail = zl < -1e8
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.log(erfcx(-zl / math.sqrt(2)) * np.abs(zl)) + 0.5 * math.log(math.pi / 2)
        body = -0.5 * zl * zl - _LOG_SQRT_2PI + _log1mexp(inner)
    # far tail: h(z) ~ phi(z) / z^2
    out[lo] = np.where(tail, -0.5 * zl * zl - _LOG_SQRT_2PI - 2 * np.log(np.abs(zl)), body)
    return out


def log_ei_from_moments(mu, var, best):
    """Log expected improvement ``E[max(best - f, 0)]`` for ``f ~ N(mu, var)``."""
    mu, var = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(var, dtype=float))
    sigma = np.sqrt(np.maximum(var, 0.0))
    gap = best - mu
    out = np.full(mu.shape, LOG_EI_FLOOR)
    pos = sigma > 0
    out[pos] = np.log(sigma[pos]) + log_h(gap[pos] / sigma[pos])
    flat = ~pos & (gap > 0)
    out[flat] = np.log(gap[flat])
    return out


def log_ei(model: GPModel, peptide: str, best_value: float) -> float:
    mu, var = gp_posterior(model, peptide)
    return float(log_ei_from_moments(mu, var, best_value))


def expected_improvement_mc(mu: float, sigma: float, best: float, n: int, rng: np.random.Generator) -> float:
    """Monte Carlo estimate of expected improvement, for checking the closed form."""
    f = mu + sigma * rng.standard_normal(n)
    return float(np.mean(np.maximum(best - f, 0.0)))


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance with a two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]



def levenshtein_many(query: str, candidates) -> np.ndarray:
    """Edit distances from ``query`` to every candidate, one DP vectorised over candidates.

    Candidates are right-padded with a sentinel; the answer for each is read at
    its own length, which only depends on its unpadded prefix.
    """
    cands = list(candidates)
    n = len(cands)
    if n == 0:
        return np.zeros(0, dtype=int)
    lens = np.fromiter(map(len, cands), dtype=int, count=n)
    width = int(lens.max())
    # NUL never occurs in a peptide, so it is a safe padding sentinel
    blob = "".join(c.ljust(width, "\0") for c in cands).encode("utf-32-le")
    codes = np.frombuffer(blob, dtype=np.int32).reshape(n, width)
    q = np.frombuffer(query.encode("utf-32-le"), dtype=np.int32) if query else np.zeros(0, np.int32)
    # rows index the query, columns the candidates' characters
    prev = np.tile(np.arange(width + 1), (n, 1))
    for i, qc in enumerate(q, 1):
        cur = np.empty_like(prev)
        cur[:, 0] = i
        sub = prev[:, :-1] + (codes != qc)
        dele = prev[:, 1:] + 1
        best = np.minimum(sub, dele)
        for j in range(1, width + 1):
            cur[:, j] = np.minimum(best[:, j - 1], cur[:, j - 1] + 1)
        prev = cur
    return prev[np.arange(n), lens]
