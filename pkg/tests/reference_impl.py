"""Slow, direct reference implementations used as test oracles.

Nothing here shares code with the package beyond the alphabet, so agreement
with the fast paths is meaningful.
"""
import itertools
import math
from functools import lru_cache

import numpy as np


def brute_force_mutations(U, peptide, theta, L, alphabet):
    """Threshold every (direction, position, symbol) entry, then expand the product explicitly."""
    A = alphabet.size
    sets = [{c} for c in peptide + alphabet.pad * (L - len(peptide))]
    for j in range(U.shape[1]):
        for l in range(L):
            for a in range(A):
                if abs(U[l * A + a, j]) >= theta and l <= len(peptide):
                    sets[l].add(alphabet.symbols[a])
    out = set()
    for combo in itertools.product(*[sorted(s) for s in sets]):
        s = "".join(combo)
        cut = s.find(alphabet.pad)
        out.add(s if cut < 0 else s[:cut])
    return out


def edit_distance(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def kmer_counts(p, sizes=(1, 2, 3)):
    out = {}
    for k in sizes:
        for i in range(len(p) - k + 1):
            out[p[i:i + k]] = out.get(p[i:i + k], 0) + 1
    return out


def minmax(a, b):
    keys = set(a) | set(b)
    den = sum(max(a.get(k, 0), b.get(k, 0)) for k in keys)
    return 1.0 if den == 0 else sum(min(a.get(k, 0), b.get(k, 0)) for k in keys) / den


def two_point_gp(y1, y2, k12, k1q, k2q, noise):
    """Posterior mean and variance at a query from two standardised observations, by hand."""
    m = 0.5 * (y1 + y2)
    s = abs(y1 - y2) / 2 or 1.0
    z1, z2 = (y1 - m) / s, (y2 - m) / s
    a = 1.0 + noise
    det = a * a - k12 * k12
    w1 = (a * k1q - k12 * k2q) / det
    w2 = (a * k2q - k12 * k1q) / det
    mean = m + s * (w1 * z1 + w2 * z2)
    var = 1.0 - (w1 * k1q + w2 * k2q)
    return mean, max(var, 0.0) * s * s


def expected_improvement(mu, sigma, best):
    """Textbook closed form, fine away from the far tail."""
    z = (best - mu) / sigma
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    cdf = 0.5 * math.erfc(-z / math.sqrt(2))
    return sigma * (z * cdf + pdf)


def oracle_value(oracle, peptide):
    """Independent evaluation of a sequence oracle from its serialised form."""
    d = oracle.to_dict()
    if d["kind"] == "hidden-target-edit":
        return float(edit_distance(peptide, d["target"]))
    idx = [d["residues"].index(c) for c in peptide]
    total = 0.0
    for pos, r in enumerate(idx):
        total += d["unary"][pos][r]
    for i, a, j, b, bonus in d["pairs"]:
        if max(i, j) < len(idx) and idx[i] == a and idx[j] == b:
            total += bonus
    return total


def sign_test_p(diffs):
    """One-sided exact sign test p-value for median(diffs) > 0 (zeros dropped)."""
    diffs = [x for x in diffs if x != 0]
    n = len(diffs)
    wins = sum(x > 0 for x in diffs)
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2**n


def ks_distance(a, b):
    a, b = np.sort(a), np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.abs(fa - fb).max())
