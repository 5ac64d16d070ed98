import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geocompass.alphabet import CANONICAL_RESIDUES, DEFAULT_ALPHABET, Alphabet

peptides = st.text(alphabet=CANONICAL_RESIDUES, max_size=8)


def test_default_has_twenty_residues_and_pad_last():
    assert DEFAULT_ALPHABET.size == 21
    assert DEFAULT_ALPHABET.symbols[DEFAULT_ALPHABET.pad_index] == DEFAULT_ALPHABET.pad


def test_canonical_truncates_at_first_pad():
    assert DEFAULT_ALPHABET.canonical("GT-PA") == "GT"
    assert DEFAULT_ALPHABET.canonical("-GTP") == ""
    assert DEFAULT_ALPHABET.canonical([5, 16, 12, 20, 0]) == "GTP"


def test_rejects_duplicate_symbols_and_unknown_residues():
    with pytest.raises(ValueError):
        Alphabet("AA")
    with pytest.raises(ValueError):
        DEFAULT_ALPHABET.canonical("GTX")
    with pytest.raises(ValueError):
        DEFAULT_ALPHABET.indices("GTPA", 3)


@given(peptides)
def test_onehot_round_trips_through_canonical(p):
    grid = DEFAULT_ALPHABET.onehot(p, 8)
    assert np.all(grid.sum(axis=1) == 1)
    assert DEFAULT_ALPHABET.canonical(np.argmax(grid, axis=1)) == p
