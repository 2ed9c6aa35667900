import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_spd
from oracles import cholesky_loops, udu_loops
from puskf.errors import NegativeEigenvalue, NotPositiveDefinite, NotPositiveSemiDefinite
from puskf.factorizations import (
    UdFactors,
    cholesky_lower,
    condition_number,
    decorrelate_cholesky,
    decorrelate_ud,
    mgs_triangularize,
    symmetric_sqrt,
    udu_decompose,
    wmgs,
)

dims = st.integers(min_value=1, max_value=12)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.mark.parametrize("n", [1, 2, 5, 12])
def test_cholesky_matches_loop_oracle(rng, n):
    P = random_spd(rng, n)
    np.testing.assert_allclose(cholesky_lower(P), cholesky_loops(P), rtol=1e-9, atol=1e-12)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_lower(np.diag([1.0, -1.0]))


@pytest.mark.parametrize("n", [1, 3, 8])
def test_udu_matches_loop_oracle(rng, n):
    P = random_spd(rng, n)
    f = udu_decompose(P)
    U, D = udu_loops(P)
    np.testing.assert_allclose(f.U, U, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(f.D, D, rtol=1e-9)


def test_udu_semidefinite_clamps_zero_pivot():
    v = np.array([1.0, 2.0, 3.0])
    f = udu_decompose(np.outer(v, v))
    assert np.count_nonzero(f.D) == 1
    np.testing.assert_allclose(f.matrix(), np.outer(v, v), atol=1e-12)


def test_udu_rejects_negative_pivot():
    with pytest.raises(NotPositiveSemiDefinite):
        udu_decompose(np.diag([1.0, -1.0]))


@given(n=dims, seed=seeds)
def test_udu_structure(n, seed):
    P = random_spd(np.random.default_rng(seed), n)
    f = udu_decompose(P)
    assert np.allclose(np.tril(f.U, -1), 0.0)
    assert np.all(np.diag(f.U) == 1.0)
    assert np.all(f.D >= 0)
    np.testing.assert_allclose(f.matrix(), P, rtol=1e-10, atol=1e-10 * np.abs(P).max())


@pytest.mark.parametrize("form", ["symmetric", "eigen"])
def test_symmetric_sqrt_reconstructs(rng, form):
    Q = random_spd(rng, 6)
    M = symmetric_sqrt(Q, form)
    np.testing.assert_allclose(M @ M.T, Q, rtol=1e-10, atol=1e-10)
    if form == "symmetric":
        np.testing.assert_allclose(M, M.T)


def test_symmetric_sqrt_of_diagonal_is_elementwise():
    np.testing.assert_allclose(symmetric_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_symmetric_sqrt_rejects_negative():
    with pytest.raises(NegativeEigenvalue):
        symmetric_sqrt(np.diag([1.0, -0.5]))


@given(n=dims, extra=st.integers(0, 6), seed=seeds)
def test_mgs_gram_matches(n, extra, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n + extra, n))
    W = mgs_triangularize(M)
    assert np.allclose(np.tril(W, -1), 0.0)
    assert np.all(np.diag(W) >= 0)
    np.testing.assert_allclose(W.T @ W, M.T @ M, rtol=1e-10, atol=1e-10 * (M.T @ M).max())


def test_mgs_agrees_with_householder(rng):
    M = rng.standard_normal((9, 5))
    np.testing.assert_allclose(mgs_triangularize(M), mgs_triangularize(M, "householder"), atol=1e-12)


def test_mgs_rank_deficient_gives_zero_row():
    M = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    W = mgs_triangularize(M)
    assert W[1, 1] == 0.0
    np.testing.assert_allclose(W.T @ W, M.T @ M, atol=1e-12)


@given(n=dims, q=st.integers(0, 5), seed=seeds)
def test_wmgs_weighted_gram(n, q, seed):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, n + q))
    Dh = rng.uniform(0.1, 3.0, n + q)
    f = wmgs(W, Dh)
    np.testing.assert_allclose(f.matrix(), (W * Dh) @ W.T, rtol=1e-10, atol=1e-10)


def test_wmgs_rejects_negative_weights():
    with pytest.raises(ValueError):
        wmgs(np.eye(2), [1.0, -1.0])


def test_condition_number_diagonal():
    assert condition_number(np.diag([1.0, 100.0])) == pytest.approx(100.0)
    assert condition_number(np.diag([1.0, 0.0])) == np.inf


def test_sqrt_factor_condition_is_square_root(rng):
    P = random_spd(rng, 5, cond=1e6)
    assert condition_number(cholesky_lower(P)) == pytest.approx(np.sqrt(condition_number(P)), rel=1e-8)


@pytest.mark.parametrize("decor", ["cholesky", "ud"])
def test_decorrelation_whitens(rng, decor):
    R = random_spd(rng, 4)
    H = rng.standard_normal((4, 3))
    r = rng.standard_normal(4)
    if decor == "cholesky":
        Hz, rz = decorrelate_cholesky(R, H, r)
        T = np.linalg.solve(cholesky_lower(R), np.eye(4))
        np.testing.assert_allclose(T @ R @ T.T, np.eye(4), atol=1e-10)
    else:
        Hz, rz, Dr = decorrelate_ud(R, H, r)
        T = np.linalg.solve(udu_decompose(R).U, np.eye(4))
        np.testing.assert_allclose(T @ R @ T.T, np.diag(Dr), atol=1e-10)
    np.testing.assert_allclose(Hz, T @ H, atol=1e-10)
    np.testing.assert_allclose(rz, T @ r, atol=1e-10)


def test_ud_factors_matrix_is_symmetric():
    f = UdFactors(np.array([[1.0, 0.5], [0.0, 1.0]]), np.array([2.0, 1.0]))
    np.testing.assert_allclose(f.matrix(), [[2.25, 0.5], [0.5, 1.0]])
