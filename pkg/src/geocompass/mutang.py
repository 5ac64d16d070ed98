"""Tangent-space mutation enumeration.

Each stable left-singular direction of the decoder Jacobian, read as an
``L x A`` grid, votes for the residue substitutions it moves most. The votes
form a pool of ``(position, residue)`` pairs; per-position admissible sets are
the pool plus the current residue, and candidates are their Cartesian product.

Products are taken over padded grids and then canonicalised (truncated at the
first pad), so the enumeration below walks a trie in which choosing the pad
ends the peptide. This yields every distinct canonical peptide exactly once.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .alphabet import DEFAULT_ALPHABET, Alphabet
from .decoders import DecoderModel, argmax_peptide
from .manifold import DegenerateChart, KappaChart, build_chart

DEFAULT_THETA = 0.1
DEFAULT_CAP = 4096


def mutation_pool(chart: KappaChart, peptide: str, theta_mut: float,
                  alphabet: Alphabet = DEFAULT_ALPHABET) -> set[tuple[int, str]]:
    """Pairs ``(position, symbol)`` whose entry in some stable direction reaches ``theta_mut``.

    Positions are 0-indexed. Entries past the first pad slot of ``peptide`` are
    dropped; the slot right after the last residue may propose an extension.
    """
    if not theta_mut > 0:
        raise ValueError("theta_mut must be positive")
    A = alphabet.size
    if chart.U.shape[0] % A:
        raise ValueError("chart ambient dimension is not a multiple of the alphabet size")
    L = chart.U.shape[0] // A
    if len(peptide) > L:
        raise ValueError(f"peptide longer than L={L}")
    grids = np.abs(chart.U.T).reshape(chart.k, L, A)
    hit = np.any(grids >= theta_mut, axis=0)
    hit[len(peptide) + 1:] = False
    return {(int(l), alphabet.symbols[a]) for l, a in zip(*np.nonzero(hit))}


@dataclass(frozen=True)
class PositionSets:
    """Admissible symbols per position of a padded peptide of length ``L``."""

    sets: tuple[frozenset, ...]
    current: str
    alphabet: Alphabet = DEFAULT_ALPHABET

    def __post_init__(self):
        padded = self.padded
        for l, s in enumerate(self.sets):
            if padded[l] not in s:
                raise ValueError(f"current symbol missing from position {l}")

    @property
    def L(self) -> int:
        return len(self.sets)

    @property
    def padded(self) -> str:
        return self.current + self.alphabet.pad * (self.L - len(self.current))

    def __iter__(self):
        return iter(self.sets)

    def __len__(self):
        return len(self.sets)


def position_sets(pool, peptide: str, L: int | None = None,
                  alphabet: Alphabet = DEFAULT_ALPHABET) -> PositionSets:
    L = len(peptide) if L is None else L
    padded = peptide + alphabet.pad * (L - len(peptide))
    sets = [{c} for c in padded]
    for l, a in pool:
        if l <= len(peptide) and l < L:
            sets[l].add(a)
    return PositionSets(tuple(frozenset(s) for s in sets), peptide, alphabet)


class _Trie:
    """Counts and ranks the distinct canonical peptides of a product of position sets."""

    def __init__(self, sets, pad: str):
        self.choices = [sorted(s - {pad}) for s in sets]
        self.stops = [pad in s for s in sets]
        L = len(self.choices)

        @lru_cache(maxsize=None)
        def count(l: int) -> int:
            if l == L:
                return 1
            return len(self.choices[l]) * count(l + 1) + int(self.stops[l])

        self.count = count

    @property
    def size(self) -> int:
        return self.count(0)

    def unrank(self, r: int) -> str:
        out, l = [], 0
        while l < len(self.choices):
            if self.stops[l]:
                if r == 0:
                    break
                r -= 1
            i, r = divmod(r, self.count(l + 1))
            out.append(self.choices[l][i])
            l += 1
        return "".join(out)


def product_size(ps: PositionSets) -> int:
    """Number of distinct canonical peptides in the product of the sets."""
    return _Trie(ps.sets, ps.alphabet.pad).size


def single_substitutions(ps: PositionSets) -> list[str]:
    """Distinct canonical peptides differing from the current one at one position."""
    base = ps.padded
    out = {ps.alphabet.canonical(base[:l] + a + base[l + 1:])
           for l, s in enumerate(ps.sets) for a in s if a != base[l]}
    out.discard(ps.current)
    return sorted(out)


def _sampling_rng(ps: PositionSets, seed: int) -> np.random.Generator:
    key = zlib.crc32("|".join("".join(sorted(s)) for s in ps.sets).encode() + ps.current.encode())
    return np.random.default_rng([int(seed), key])


def enumerate_candidates(ps: PositionSets, cap: int | None = DEFAULT_CAP, seed: int = 0) -> set[str]:
    """Canonical Cartesian product of the sets, or a deterministic subset of size ``cap``.

    Over the cap the subset holds the current peptide, then single
    substitutions (lexicographic if even these overflow), then uniform draws
    without replacement from the rest of the product.
    """
    if cap is not None and cap < 1:
        raise ValueError("cap must be >= 1")
    trie = _Trie(ps.sets, ps.alphabet.pad)
    n = trie.size
    if cap is None or n <= cap:
        return {trie.unrank(r) for r in range(n)}
    out = {ps.current}
    for p in single_substitutions(ps):
        if len(out) >= cap:
            return out
        out.add(p)
    rng = _sampling_rng(ps, seed)
    nbytes = (n.bit_length() + 7) // 8 + 8
    while len(out) < cap:
        need = cap - len(out)
        if n < 2**62:
            draws = (int(r) for r in rng.integers(0, n, size=2 * need))
        else:
            # 64 spare bits make the modulo bias negligible
            draws = (int.from_bytes(rng.bytes(nbytes), "big") % n for _ in range(2 * need))
        for r in draws:
            out.add(trie.unrank(r))
            if len(out) >= cap:
                break
    return out


def mutang(model: DecoderModel, z, kappa: float = 1e-6, theta_mut: float = DEFAULT_THETA,
           cap: int | None = DEFAULT_CAP, eps_fd: float = 0.05, seed: int = 0) -> set[str]:
    """Candidate peptides around ``argmax_peptide(model, z)`` from its stable tangent directions."""
    current = argmax_peptide(model, z)
    try:
        chart = build_chart(model, z, kappa, eps_fd=eps_fd)
    except DegenerateChart:
        return {current}
    pool = mutation_pool(chart, current, theta_mut, model.alphabet)
    return enumerate_candidates(position_sets(pool, current, model.L, model.alphabet), cap, seed)
