"""Residue alphabet and peptide string helpers.

Peptides are plain ``str`` objects over the alphabet's residue symbols. The pad
symbol never appears inside a canonical peptide: everything from the first pad
onwards is dropped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CANONICAL_RESIDUES = "ACDEFGHIKLMNPQRSTVWY"
PAD = "-"


@dataclass(frozen=True)
class Alphabet:
    residues: str = CANONICAL_RESIDUES
    pad: str = PAD

    def __post_init__(self):
        symbols = self.residues + self.pad
        if len(set(symbols)) != len(symbols):
            raise ValueError(f"alphabet symbols must be unique: {symbols!r}")
        if len(self.pad) != 1:
            raise ValueError("pad must be a single character")

    @property
    def symbols(self) -> str:
        return self.residues + self.pad

    @property
    def size(self) -> int:
        return len(self.residues) + 1

    @property
    def pad_index(self) -> int:
        return len(self.residues)

    def index(self, symbol: str) -> int:
        i = self.symbols.find(symbol)
        if i < 0:
            raise ValueError(f"symbol {symbol!r} not in alphabet")
        return i

    def canonical(self, seq) -> str:
        """Map a symbol string or index sequence to its canonical peptide."""
        if isinstance(seq, str):
            chars = seq
        else:
            chars = "".join(self.symbols[int(i)] for i in seq)
        cut = chars.find(self.pad)
        out = chars if cut < 0 else chars[:cut]
        for c in out:
            if c not in self.residues:
                raise ValueError(f"residue {c!r} not in alphabet")
        return out

    def indices(self, peptide: str, length: int) -> np.ndarray:
        """Residue indices of ``peptide`` padded to ``length``."""
        if len(peptide) > length:
            raise ValueError(f"peptide of length {len(peptide)} exceeds L={length}")
        idx = np.full(length, self.pad_index, dtype=int)
        for i, c in enumerate(peptide):
            idx[i] = self.index(c)
            if idx[i] == self.pad_index:
                raise ValueError("pad inside peptide")
        return idx

    def onehot(self, peptide: str, length: int) -> np.ndarray:
        grid = np.zeros((length, self.size))
        grid[np.arange(length), self.indices(peptide, length)] = 1.0
        return grid


DEFAULT_ALPHABET = Alphabet()
