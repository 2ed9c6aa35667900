import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_spd
from oracles import ekf_update_inv, partial_update_elementwise, schmidt_literal
from puskf.errors import SingularInnovation, WeightOutOfRange
from puskf.filter_core import (
    CHI2_099,
    GaussianBelief,
    NonlinearSystem,
    UpdateWeights,
    batch_partial_update,
    chi2_gate,
    ekf_propagate,
    ekf_update,
    kalman_gain,
    linear_update,
    mahalanobis2,
    partial_update,
    schmidt_update_block,
    sequential_update,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def linear_system(F, H, R, G=None, Q=None):
    n = F.shape[0]
    G = np.eye(n) if G is None else G
    Q = np.zeros((G.shape[1], G.shape[1])) if Q is None else Q
    return NonlinearSystem(
        f=lambda x, u=None, k=0: F @ x, h=lambda x, k=0: H @ x, F=lambda x, u=None, k=0: F,
        H=lambda x, k=0: H, G=G, Q=Q, R=R, name="linear",
    )


def random_problem(rng, n=4, m=3):
    P = random_spd(rng, n, 50.0)
    H = rng.standard_normal((m, n))
    R = random_spd(rng, m, 10.0)
    x = rng.standard_normal(n)
    y = rng.standard_normal(m)
    return x, P, H, R, y


def test_update_weights_validation():
    with pytest.raises(WeightOutOfRange):
        UpdateWeights([0.5, 1.5])
    with pytest.raises(WeightOutOfRange):
        UpdateWeights([np.nan])
    w = UpdateWeights([0.25, 1.0])
    np.testing.assert_allclose(w.gamma, [0.75, 0.0])
    assert UpdateWeights.full(3).is_full and UpdateWeights.consider(3).is_frozen


def test_update_weights_are_read_only():
    w = UpdateWeights([0.5])
    with pytest.raises(ValueError):
        w.beta[0] = 1.0


def test_kalman_gain_matches_inverse_oracle(rng):
    x, P, H, R, y = random_problem(rng)
    K, S = kalman_gain(P, H, R)
    _, _, K_ref = ekf_update_inv(x, P, H, R, y - H @ x)
    np.testing.assert_allclose(K, K_ref, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(S, H @ P @ H.T + R, rtol=1e-12)


def test_singular_innovation_raises():
    with pytest.raises(SingularInnovation):
        kalman_gain(np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)))


@pytest.mark.parametrize("joseph", [False, True])
def test_linear_update_matches_oracle(rng, joseph):
    x, P, H, R, y = random_problem(rng)
    xp, Pp, _, _ = linear_update(x, P, H, R, y - H @ x, joseph)
    x_ref, P_ref, _ = ekf_update_inv(x, P, H, R, y - H @ x)
    np.testing.assert_allclose(xp, x_ref, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(Pp, 0.5 * (P_ref + P_ref.T), rtol=1e-8, atol=1e-10)


def test_scalar_example_trivial():
    # prior N(0, 4), y = 2 with R = 4: posterior mean 1, variance 2
    sys = linear_system(np.eye(1), np.eye(1), np.array([[4.0]]))
    post = ekf_update(GaussianBelief(np.zeros(1), np.array([[4.0]])), sys, [2.0])
    assert post.mean[0] == pytest.approx(1.0)
    assert post.covariance()[0, 0] == pytest.approx(2.0)


@given(seed=seeds)
def test_partial_update_matches_elementwise(seed):
    rng = np.random.default_rng(seed)
    x, P, H, R, y = random_problem(rng)
    xp, Pp, _, _ = linear_update(x, P, H, R, y - H @ x)
    beta = rng.uniform(0, 1, len(x))
    got = partial_update(x, xp, P, Pp, beta)
    ref = partial_update_elementwise(x, xp, P, Pp, beta)
    np.testing.assert_allclose(got[0], ref[0], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(got[1], 0.5 * (ref[1] + ref[1].T), rtol=1e-12, atol=1e-14)


@given(seed=seeds)
def test_partial_update_covariance_between_bounds(seed):
    # P++ - P+ is a Schur product of PSD matrices; variances never exceed the prior
    rng = np.random.default_rng(seed)
    x, P, H, R, y = random_problem(rng)
    xp, Pp, _, _ = linear_update(x, P, H, R, y - H @ x)
    _, Ppp = partial_update(x, xp, P, Pp, rng.uniform(0, 1, len(x)))
    scale = np.abs(P).max()
    assert np.linalg.eigvalsh(Ppp - Pp).min() >= -1e-10 * scale
    assert np.all(np.diag(Ppp) <= np.diag(P) + 1e-12 * scale)


def test_partial_update_extremes(rng):
    x, P, H, R, y = random_problem(rng)
    xp, Pp, _, _ = linear_update(x, P, H, R, y - H @ x)
    x1, P1 = partial_update(x, xp, P, Pp, np.ones(4))
    np.testing.assert_array_equal(x1, xp)
    np.testing.assert_allclose(P1, Pp, rtol=1e-13, atol=1e-14)
    x0, P0 = partial_update(x, xp, P, Pp, np.zeros(4))
    np.testing.assert_array_equal(x0, x)
    np.testing.assert_allclose(P0, P, rtol=1e-15, atol=0)


def test_partial_update_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        partial_update(np.zeros(2), np.zeros(2), np.eye(2), np.eye(2), np.ones(3))


@pytest.mark.parametrize("n_core,m", [(1, 1), (2, 1), (3, 2), (4, 3)])
def test_schmidt_block_matches_literal(rng, n_core, m):
    n = n_core + 2
    x, P, H, R, y = random_problem(rng, n, m)
    r = y - H @ x
    got = schmidt_update_block(GaussianBelief(x, P), n_core, H[:, :n_core], H[:, n_core:], R, r)
    x_ref, P_ref = schmidt_literal(x, P, n_core, H, R, r)
    np.testing.assert_allclose(got.mean, x_ref, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(got.covariance(), 0.5 * (P_ref + P_ref.T), rtol=1e-9, atol=1e-12)


def test_schmidt_equals_partial_update_with_zero_parameter_weights(rng):
    n_core, n, m = 2, 4, 2
    x, P, H, R, y = random_problem(rng, n, m)
    r = y - H @ x
    xp, Pp, _, _ = linear_update(x, P, H, R, r)
    beta = np.r_[np.ones(n_core), np.zeros(n - n_core)]
    x_pu, P_pu = partial_update(x, xp, P, Pp, beta)
    s = schmidt_update_block(GaussianBelief(x, P), n_core, H[:, :n_core], H[:, n_core:], R, r)
    np.testing.assert_allclose(x_pu, s.mean, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(P_pu, s.covariance(), rtol=1e-9, atol=1e-12)


def test_sequential_equals_batch_for_linear_system(rng):
    x, P, H, R, y = random_problem(rng)
    sys = linear_system(np.eye(4), H, R)
    b = GaussianBelief(x, P)
    full = UpdateWeights.full(4)
    seq = sequential_update(b, sys, y, full)
    bat = batch_partial_update(b, sys, y, full)
    np.testing.assert_allclose(seq.mean, bat.mean, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(seq.covariance(), bat.covariance(), rtol=1e-9, atol=1e-12)


def test_frozen_weights_return_prior_exactly(rng):
    x, P, H, R, y = random_problem(rng)
    sys = linear_system(np.eye(4), H, R)
    b = GaussianBelief(x, P)
    for upd in (sequential_update, batch_partial_update):
        post = upd(b, sys, y, UpdateWeights.consider(4))
        np.testing.assert_array_equal(post.mean, x)
        np.testing.assert_array_equal(post.covariance(), P)


def test_ekf_propagate_linear(rng):
    F = rng.standard_normal((3, 3))
    Q = np.diag([0.1, 0.2, 0.3])
    sys = linear_system(F, np.eye(3), np.eye(3), Q=Q)
    P = random_spd(rng, 3)
    x = rng.standard_normal(3)
    out = ekf_propagate(GaussianBelief(x, P), sys)
    np.testing.assert_allclose(out.mean, F @ x)
    np.testing.assert_allclose(out.covariance(), F @ P @ F.T + Q, rtol=1e-12)


@given(seed=seeds, c=st.floats(0.1, 10.0))
def test_chi2_gate_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, 3)
    r = rng.standard_normal(3) * 2
    assert chi2_gate(r, S, CHI2_099[3]) == chi2_gate(c * r, c * c * S, CHI2_099[3])
    assert mahalanobis2(c * r, c * c * S) == pytest.approx(mahalanobis2(r, S), rel=1e-9)


@pytest.mark.parametrize("dof,value", [(1, 6.63), (2, 9.21), (3, 11.34), (6, 16.81)])
def test_chi2_constants(dof, value):
    from scipy.stats import chi2
    assert CHI2_099[dof] == value
    assert chi2.ppf(0.99, dof) == pytest.approx(value, abs=0.01)
