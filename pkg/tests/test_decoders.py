import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geocompass.alphabet import DEFAULT_ALPHABET
from geocompass.decoders import (LOG_FLOOR, DimensionError, FlatLinear, argmax_peptide, decode, decode_flat,
                                 encode, grid_peptide, jacobian_fd, load_model, make_flat_linear, make_sphere,
                                 make_toy_mlp, save_model, unflatten)

A = DEFAULT_ALPHABET.size
latents6 = arrays(np.float64, 6, elements=st.floats(-3, 3))


def test_zero_logits_give_uniform_rows():
    m = FlatLinear(4, 3, W=np.eye(3 * A, 4), b=np.zeros(3 * A))
    np.testing.assert_allclose(decode(m, np.zeros(4)), np.full((3, A), 1.0 / A), rtol=0, atol=1e-15)
    np.testing.assert_allclose(decode_flat(m, np.zeros(4)), np.full(3 * A, 1.0 / A), rtol=0, atol=1e-15)


def test_decode_is_bitwise_deterministic():
    m = make_toy_mlp(d=6, L=5, seed=42)
    e1 = np.eye(6)[0]
    assert np.array_equal(decode(m, e1), decode(m, e1))
    assert np.array_equal(decode(m, e1), decode(make_toy_mlp(d=6, L=5, seed=42), e1))


def test_sphere_origin_lies_on_sphere():
    r, c = 2.5, (1.0, -2.0, 0.5)
    m = make_sphere(r, center=c)
    x = decode_flat(m, np.zeros(2))
    assert math.isclose(np.linalg.norm(x[:3] - np.asarray(c)), r, rel_tol=1e-12)
    # z = 0 is the south pole of the embedding
    np.testing.assert_allclose(x[:3], np.asarray(c) + [0, 0, -r], atol=1e-12)
    assert np.all(x[3:] == 0)


@given(latents6)
def test_rows_sum_to_one_and_flat_matches_grid(z):
    m = make_toy_mlp(d=6, L=5, seed=42, out_scale=4.0)
    g = decode(m, z)
    np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-9)
    flat = decode_flat(m, z)
    assert np.array_equal(flat, g.ravel())
    assert np.array_equal(unflatten(m, flat), g)


@given(latents6)
def test_log_grid_is_clamped(z):
    m = make_toy_mlp(d=6, L=5, seed=42, out_scale=40.0)
    lg = m.log_grid(z)
    assert lg.min() >= LOG_FLOOR
    np.testing.assert_allclose(np.exp(lg)[lg > LOG_FLOOR + 1], decode(m, z)[lg > LOG_FLOOR + 1], rtol=1e-12)


def test_argmax_reads_one_hot_rows_and_truncates_at_pad():
    grid = DEFAULT_ALPHABET.onehot("GTP", 6)
    assert grid_peptide(grid) == "GTP"


def test_argmax_ties_go_to_lowest_index():
    assert grid_peptide(np.full((4, A), 1.0 / A)) == DEFAULT_ALPHABET.residues[0] * 4


def test_pad_maximal_first_row_gives_empty_peptide():
    grid = np.full((4, A), 0.01)
    grid[:, 3] = 0.5
    grid[0, DEFAULT_ALPHABET.pad_index] = 0.9
    assert grid_peptide(grid) == ""


def test_fd_jacobian_matches_analytic_on_linear_model():
    m = make_flat_linear(d=4, L=3, seed=1, scale=0.2)
    z = np.array([0.1, -0.2, 0.05, 0.0])
    J = m.jacobian(z)
    errs = [np.abs(jacobian_fd(m, z, h) - J).max() for h in (1e-2, 1e-3, 1e-4)]
    assert errs[0] < 1e-3
    assert errs[2] < errs[1] < errs[0]


def test_constant_decoder_has_zero_jacobian():
    m = FlatLinear(3, 2, W=np.zeros((2 * A, 3)), b=np.arange(2 * A, dtype=float))
    assert np.array_equal(jacobian_fd(m, np.ones(3)), np.zeros((2 * A, 3)))


def test_fd_error_is_first_order_on_toy_mlp():
    m = make_toy_mlp(d=6, L=5, seed=42, out_scale=2.0)
    z = np.random.default_rng(0).standard_normal(6)
    J = m.jacobian(z)
    hs = np.array([0.1, 0.05, 0.025])
    errs = np.array([np.abs(jacobian_fd(m, z, h) - J).max() for h in hs])
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 0.9


@given(latents6, arrays(np.float64, 5 * A, elements=st.floats(-1, 1)))
def test_vjp_is_transpose_of_jacobian(z, g):
    m = make_toy_mlp(d=6, L=5, seed=42, out_scale=2.0)
    np.testing.assert_allclose(m.vjp(z, g)[0], g @ m.jacobian(z), atol=1e-10)


def test_log_grid_pullback_matches_finite_differences():
    m = make_toy_mlp(d=6, L=5, seed=42, out_scale=2.0)
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((3, 6))
    G = rng.standard_normal((3, 5 * A))
    _, pullback = m.log_grid_with_vjp(Z)
    got = pullback(G)
    h = 1e-6
    for i in range(3):
        f = lambda z: float(G[i] @ m.log_grid(z).ravel())  # noqa: E731
        fd = [(f(Z[i] + h * e) - f(Z[i] - h * e)) / (2 * h) for e in np.eye(6)]
        np.testing.assert_allclose(got[i], fd, rtol=1e-6, atol=1e-8)


def test_encode_round_trips_on_invertible_linear_decoder():
    L = 1
    rng = np.random.default_rng(7)
    W = rng.standard_normal((L * A, L * A))
    m = FlatLinear(L * A, L, W=W, b=np.zeros(L * A), output="logit")
    hits = 0
    for _ in range(20):
        z = rng.standard_normal(L * A)
        s = np.sort(decode(m, z)[0])
        if s[-1] - s[-2] <= 0.1:
            continue
        p = argmax_peptide(m, z)
        assert argmax_peptide(m, encode(m, p)) == p
        hits += 1
    assert hits > 5


def test_encode_empty_peptide_solves_normal_equations():
    m = make_flat_linear(d=5, L=2, seed=3, output="logit")
    target = DEFAULT_ALPHABET.onehot("", 2).ravel()
    W = np.asarray(m.W)
    expected = np.linalg.solve(W.T @ W, W.T @ (target - m.b))
    np.testing.assert_allclose(encode(m, ""), expected, atol=1e-10)


def test_encode_is_deterministic_and_usually_round_trips(toy_mlp):
    rng = np.random.default_rng(1)
    ok = 0
    for _ in range(8):
        p = argmax_peptide(toy_mlp, rng.standard_normal(toy_mlp.d))
        z1, z2 = encode(toy_mlp, p), encode(toy_mlp, p)
        assert np.array_equal(z1, z2)
        ok += argmax_peptide(toy_mlp, z1) == p
    assert ok >= 2


def test_dimension_mismatch_raises(toy_mlp):
    with pytest.raises(DimensionError):
        decode(toy_mlp, np.zeros(3))


@pytest.mark.parametrize("factory", [
    lambda: make_toy_mlp(d=4, L=3, seed=5),
    lambda: make_flat_linear(d=4, L=3, seed=5, output="logit"),
    lambda: make_sphere(2.0, warp=0.5, center=(1, 0, 0)),
])
def test_json_round_trip_preserves_outputs(tmp_path, factory):
    m = factory()
    path = tmp_path / "m.json"
    save_model(m, path)
    m2 = load_model(path)
    z = np.linspace(-0.5, 0.5, m.d)
    assert np.array_equal(decode(m, z), decode(m2, z))
    assert m2.to_dict() == m.to_dict()
