"""Synthetic potentials on decoder logits and black-box sequence objectives.

Potentials take clamped log-probability grids ``X`` of shape ``(..., L, A)`` (or
flattened ``(..., L*A)``) and return a scalar per grid, with analytic gradients.
Sequence oracles map a canonical peptide to a float that is to be minimised.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from .alphabet import DEFAULT_ALPHABET, Alphabet
from .decoders import LOG_FLOOR, softmax
from .surrogate import levenshtein

POTENTIAL_KINDS = ("linear-residue-score", "smooth-motif")
ORACLE_KINDS = ("hidden-target-edit", "weighted-residue", "motif-bonus")
BRUTE_FORCE_LIMIT = 10**6


# ------------------------------------------------------------------ potentials


@dataclass(frozen=True, eq=False)
class SyntheticPotential:
    """``linear-residue-score``: ``sum(w * softmax_rows(X))``.

    ``smooth-motif``: ``-scale * sum_o prod_j softmax_rows(X)[o + j, motif[j]]``,
    i.e. minus the expected number of motif occurrences under independent rows.
    """

    kind: str
    weights: np.ndarray
    motif: tuple[int, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "smooth-motif" and not 0 < len(self.motif) <= self.weights.shape[0]:
            raise ValueError("motif must be nonempty and fit in L")

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def _grid(self, X):
        X = np.asarray(X, dtype=float)
        L, A = self.shape
        flat = X.shape[-1] == L * A and (X.ndim == 1 or X.shape[-2:] != (L, A))
        return (X.reshape(*X.shape[:-1], L, A) if flat else X), flat

    def value(self, X) -> np.ndarray:
        G, _ = self._grid(X)
        P = softmax(G, axis=-1)
        if self.kind == "linear-residue-score":
            return np.sum(P * self.weights, axis=(-2, -1))
        return -self.scale * np.sum(self._motif_terms(P), axis=-1)

    def _motif_terms(self, P):
        K = len(self.motif)
        n_off = P.shape[-2] - K + 1
        cols = [P[..., j:j + n_off, a] for j, a in enumerate(self.motif)]
        return np.prod(np.stack(cols, axis=-1), axis=-1)

    def grad(self, X) -> np.ndarray:
        G, flat = self._grid(X)
        P = softmax(G, axis=-1)
        if self.kind == "linear-residue-score":
            dP = np.broadcast_to(self.weights, P.shape)
        else:
            dP = np.zeros(P.shape)
            K = len(self.motif)
            n_off = P.shape[-2] - K + 1
            cols = np.stack([P[..., j:j + n_off, a] for j, a in enumerate(self.motif)], axis=-1)
            for j, a in enumerate(self.motif):
                others = np.prod(np.delete(cols, j, axis=-1), axis=-1)
                dP[..., j:j + n_off, a] += -self.scale * others
        # softmax row Jacobian transpose: p * (g - <p, g>)
        g = P * (dP - np.sum(P * dP, axis=-1, keepdims=True))
        return g.reshape(*g.shape[:-2], -1) if flat else g

    def peptide_value(self, peptide: str, alphabet: Alphabet = DEFAULT_ALPHABET) -> float:
        """Potential of a peptide's clamped one-hot log grid."""
        L, _ = self.shape
        X = np.where(alphabet.onehot(peptide, L) > 0, 0.0, LOG_FLOOR)
        return float(self.value(X))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(), "motif": list(self.motif),
                "scale": self.scale}


def fd_gradient(f, X, h: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    X = np.asarray(X, dtype=float)
    g = np.empty_like(X)
    for i in range(X.size):
        e = np.zeros_like(X)
        e.flat[i] = h
        g.flat[i] = (f(X + e) - f(X - e)) / (2 * h)
    return g


def make_potential(kind: str, seed: int, L: int, alphabet: Alphabet = DEFAULT_ALPHABET,
                   scale: float = 1.0, shift: float = 0.0, motif_len: int = 3) -> SyntheticPotential:
    """Seeded synthetic potential.

    The linear score uses weights ``shift + scale * N(0, 1)`` on residues and 0
    on the pad, so a peptide's potential is the sum of its residue weights.
    """
    rng = np.random.default_rng([int(seed), 7])
    A = alphabet.size
    if kind == "linear-residue-score":
        w = shift + scale * rng.standard_normal((L, A))
        w[:, alphabet.pad_index] = 0.0
        return SyntheticPotential(kind, w)
    if kind == "smooth-motif":
        motif = tuple(int(a) for a in rng.integers(0, A - 1, size=min(motif_len, L)))
        return SyntheticPotential(kind, np.zeros((L, A)), motif, scale)
    raise ValueError(f"unknown potential kind {kind!r}")


# ------------------------------------------------------------- sequence oracles


@dataclass(frozen=True, eq=False)
class SequenceOracle:
    """Deterministic peptide objective; lower is better.

    ``unary[l, r]`` scores residue index ``r`` at position ``l``; ``pairs`` holds
    ``(i, a, j, b, bonus)`` tuples added when residue ``a`` sits at ``i`` and
    ``b`` at ``j`` (tuples sharing ``(i, j)`` are mutually exclusive). ``hidden-target-edit`` ignores both and returns the edit
    distance to ``target``.
    """

    kind: str
    residues: str = DEFAULT_ALPHABET.residues
    target: str = ""
    unary: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    pairs: tuple = ()
    global_min: float | None = None

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}")

    def __call__(self, peptide: str) -> float:
        if self.kind == "hidden-target-edit":
            return float(levenshtein(peptide, self.target))
        idx = [self.residues.index(c) for c in peptide]
        L = self.unary.shape[0]
        if len(idx) > L:
            raise ValueError(f"peptide longer than {L}")
        val = float(sum(self.unary[l, r] for l, r in enumerate(idx)))
        for i, a, j, b, bonus in self.pairs:
            if i < len(idx) and j < len(idx) and idx[i] == a and idx[j] == b:
                val += bonus
        return val

    def to_dict(self) -> dict:
        return {"kind": self.kind, "residues": self.residues, "target": self.target,
                "unary": self.unary.tolist(), "pairs": [list(p) for p in self.pairs],
                "global_min": self.global_min}

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceOracle":
        unary = np.asarray(d.get("unary") or np.zeros((0, 0)), dtype=float)
        return cls(d["kind"], d["residues"], d.get("target", ""), unary,
                   tuple(tuple(p) for p in d.get("pairs", [])), d.get("global_min"))


def make_oracle(kind: str, seed: int, L: int, residues: str = DEFAULT_ALPHABET.residues,
                n_pairs: int | None = None, bonus: float = -16.0, pair_penalty: float = 1.0,
                group: int = 5) -> SequenceOracle:
    """Seeded synthetic oracle over peptides of length at most ``L``.

    ``weighted-residue`` draws ``N(0, 1)`` unary weights. ``motif-bonus`` adds
    ``n_pairs`` position pairs (default ``L // 2``), each with a residue group
    of size ``group`` per position. Every group residue is the worst unary
    choice at its position (by ``pair_penalty``), but a group residue at both
    positions earns ``bonus``, which outweighs both penalties. Single
    substitutions can never complete a pair, joint moves can.
    """
    rng = np.random.default_rng([int(seed), 11])
    A = len(residues)
    if kind == "hidden-target-edit":
        target = "".join(residues[i] for i in rng.integers(0, A, size=L))
        return SequenceOracle(kind, residues, target=target, global_min=0.0)
    unary = rng.standard_normal((L, A))
    if kind == "weighted-residue":
        return SequenceOracle(kind, residues, unary=unary)
    if kind != "motif-bonus":
        raise ValueError(f"unknown oracle kind {kind!r}")
    n_pairs = max(1, L // 2) if n_pairs is None else n_pairs
    group = min(group, A)
    pos = rng.permutation(L)
    pairs = []
    for p in range(min(n_pairs, L // 2)):
        i, j = sorted(int(x) for x in pos[2 * p:2 * p + 2])
        gi, gj = (sorted(int(x) for x in rng.choice(A, size=group, replace=False)) for _ in range(2))
        unary[i, gi] = unary[i].max() + pair_penalty
        unary[j, gj] = unary[j].max() + pair_penalty
        pairs += [(i, a, j, b, float(bonus)) for a in gi for b in gj]
    return SequenceOracle(kind, residues, unary=unary, pairs=tuple(pairs))


def parse_oracle_name(name: str, L: int, residues: str = DEFAULT_ALPHABET.residues) -> SequenceOracle:
    """``synthetic:<kind>:<seed>`` or a path to an oracle JSON file."""
    parts = name.split(":")
    if len(parts) == 3 and parts[0] == "synthetic":
        return make_oracle(parts[1], int(parts[2]), L, residues)
    with open(name) as fh:
        return SequenceOracle.from_dict(json.load(fh))


def parse_potential_name(name: str, L: int, alphabet: Alphabet = DEFAULT_ALPHABET,
                         scale: float = 1.0, shift: float = 0.0) -> SyntheticPotential:
    parts = name.split(":")
    if len(parts) == 3 and parts[0] == "synthetic":
        return make_potential(parts[1], int(parts[2]), L, alphabet, scale, shift)
    with open(name) as fh:
        d = json.load(fh)
    return SyntheticPotential(d["kind"], np.asarray(d["weights"], dtype=float), tuple(d.get("motif", ())),
                              float(d.get("scale", 1.0)))


# --------------------------------------------------------- reference optimisers


def brute_force_min(oracle, residues: str, max_len: int, min_len: int = 0) -> tuple[str, float]:
    """Exhaustive minimum over all peptides with ``min_len <= length <= max_len``.

    Ties go to the shortest, then lexicographically smallest, peptide.
    """
    total = sum(len(residues) ** n for n in range(min_len, max_len + 1))
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError(f"search space of {total} peptides exceeds {BRUTE_FORCE_LIMIT}")
    best = None
    for n in range(min_len, max_len + 1):
        for t in itertools.product(sorted(residues), repeat=n):
            p = "".join(t)
            v = oracle(p)
            if best is None or v < best[1]:
                best = (p, v)
    return best


@dataclass
class BaselineResult:
    best: str
    best_value: float
    history: list = field(default_factory=list)


def random_mutation_baseline(oracle, p_seed: str, budget: int, rng: np.random.Generator,
                             residues: str = DEFAULT_ALPHABET.residues) -> BaselineResult:
    """Greedy random mutation: one uniform single substitution per oracle call.

    A mutant replaces the incumbent only if it strictly improves it. The seed
    evaluation is not charged against ``budget``.
    """
    cur, val = p_seed, oracle(p_seed)
    history = [(cur, val)]
    if not p_seed or len(residues) < 2:
        return BaselineResult(cur, val, history)
    for _ in range(budget):
        l = int(rng.integers(len(cur)))
        choices = [r for r in residues if r != cur[l]]
        cand = cur[:l] + choices[int(rng.integers(len(choices)))] + cur[l + 1:]
        v = oracle(cand)
        history.append((cand, v))
        if v < val:
            cur, val = cand, v
    return BaselineResult(cur, val, history)
