"""Full-covariance EKF machinery and the partial-update equations.

The partial update blends the prior and the nominal posterior element-wise.
With per-state weights ``beta`` and ``gamma = 1 - beta``::

    x++_i  = gamma_i x-_i + (1 - gamma_i) x+_i
    P++_ij = gamma_i gamma_j P-_ij + (1 - gamma_i gamma_j) P+_ij

``beta = 1`` is the ordinary EKF update and ``beta = 0`` a consider step.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import NonFiniteState, SingularInnovation, WeightOutOfRange
from .factorizations import UdFactors, cholesky_lower, symmetrize, udu_decompose

#: 0.99 quantiles of the chi-square distribution for 1..6 degrees of freedom
#: (standard tables; configuration values).
CHI2_099 = {1: 6.63, 2: 9.21, 3: 11.34, 4: 13.28, 5: 15.09, 6: 16.81}


@dataclass(frozen=True)
class SqrtFactor:
    """Square-root covariance ``P = S S^T`` with ``S`` lower triangular."""

    S: np.ndarray

    @property
    def n(self):
        return self.S.shape[0]

    def matrix(self):
        return symmetrize(self.S @ self.S.T)


@dataclass(frozen=True)
class GaussianBelief:
    """State mean plus a covariance in full, square-root or UD form.

    Attributes
    ----------
    mean : ndarray, shape (n,)
    cov : ndarray | SqrtFactor | UdFactors
    """

    mean: np.ndarray
    cov: object

    @property
    def form(self):
        if isinstance(self.cov, SqrtFactor):
            return "sqrt"
        if isinstance(self.cov, UdFactors):
            return "ud"
        return "full"

    def covariance(self):
        """Full covariance matrix regardless of representation."""
        if isinstance(self.cov, (SqrtFactor, UdFactors)):
            return self.cov.matrix()
        return np.asarray(self.cov)


@dataclass(frozen=True)
class UpdateWeights:
    """Per-state update fractions ``beta`` in [0, 1].

    Raises
    ------
    WeightOutOfRange
        If any entry lies outside [0, 1] or is not finite.
    """

    beta: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if not np.all(np.isfinite(b)) or np.any(b < 0.0) or np.any(b > 1.0):
            raise WeightOutOfRange(f"update weights must lie in [0, 1], got {b}")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    @property
    def gamma(self):
        return 1.0 - self.beta

    @property
    def is_full(self):
        return bool(np.all(self.beta == 1.0))

    @property
    def is_frozen(self):
        return bool(np.all(self.beta == 0.0))

    @classmethod
    def full(cls, n):
        return cls(np.ones(n))

    @classmethod
    def consider(cls, n):
        return cls(np.zeros(n))


@dataclass
class NonlinearSystem:
    """Callable bundle describing a discrete nonlinear system.

    Attributes
    ----------
    f : callable
        ``f(x, u, k)`` discrete dynamics.
    h : callable
        ``h(x, k)`` measurement function returning an m-vector.
    F : callable
        ``F(x, u, k)`` Jacobian of ``f``.
    H : callable
        ``H(x, k)`` Jacobian of ``h``.
    G : ndarray, shape (n, q)
    Q : ndarray, shape (q, q)
    R : ndarray, shape (m, m)
    f_hessians, h_hessians : callable, optional
        ``f_hessians(x, u, k)`` and ``h_hessians(x, k)`` returning arrays of
        shape (n, n, n) and (m, n, n).
    """

    f: Callable
    h: Callable
    F: Callable
    H: Callable
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    f_hessians: Optional[Callable] = None
    h_hessians: Optional[Callable] = None
    name: str = field(default="system")

    @property
    def n(self):
        return np.asarray(self.G).shape[0]


def ekf_propagate(belief, sys, u=None, k=0):
    """Propagate mean and full covariance one step.

    Returns
    -------
    GaussianBelief
        ``mean = f(x, u, k)`` and ``P = F P F^T + G Q G^T``, symmetrized.
    """
    x = belief.mean
    P = belief.covariance()
    x_new = np.asarray(sys.f(x, u, k), dtype=float)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteState(f"non-finite state after propagation at step {k}")
    F = sys.F(x, u, k)
    G = np.asarray(sys.G)
    P_new = F @ P @ F.T + G @ np.asarray(sys.Q) @ G.T
    if not np.all(np.isfinite(P_new)):
        raise NonFiniteState(f"non-finite covariance after propagation at step {k}")
    return GaussianBelief(x_new, symmetrize(P_new))


def _factor_innovation(S):
    if not np.all(np.isfinite(S)):
        raise SingularInnovation("non-finite innovation covariance")
    try:
        c = cho_factor(S, lower=True)
    except np.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance is not positive definite") from None
    if not np.all(np.isfinite(c[0])):
        raise SingularInnovation("non-finite innovation covariance")
    return c


def kalman_gain(P_minus, H, R):
    """Kalman gain and innovation covariance.

    Parameters
    ----------
    P_minus : ndarray, shape (n, n)
    H : ndarray, shape (m, n)
    R : ndarray, shape (m, m)

    Returns
    -------
    K : ndarray, shape (n, m)
    S_innov : ndarray, shape (m, m)
        ``H P H^T + R``. The gain is obtained with a Cholesky solve.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    PHt = P_minus @ H.T
    S = symmetrize(H @ PHt + R)
    c = _factor_innovation(S)
    K = cho_solve(c, PHt.T).T
    return K, S


def linear_update(x, P, H, R, residual, joseph=False):
    """Nominal (full) Kalman update for a given residual.

    Returns
    -------
    x_plus, P_plus, K, S_innov
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    K, S = kalman_gain(P, H, R)
    x_plus = x + K @ np.atleast_1d(residual)
    IKH = np.eye(len(x)) - K @ H
    if joseph:
        P_plus = IKH @ P @ IKH.T + K @ R @ K.T
    else:
        P_plus = IKH @ P
    return x_plus, symmetrize(P_plus), K, S


def ekf_update(belief, sys, y, k=0, joseph=False):
    """Batch EKF measurement update in full form.

    Returns
    -------
    GaussianBelief
    """
    x = belief.mean
    r = np.atleast_1d(y) - np.atleast_1d(sys.h(x, k))
    x_plus, P_plus, _, _ = linear_update(x, belief.covariance(), sys.H(x, k), sys.R, r, joseph)
    return GaussianBelief(x_plus, P_plus)


def partial_update(x_minus, x_plus, P_minus, P_plus, weights):
    """Blend prior and nominal posterior with per-state weights.

    Parameters
    ----------
    x_minus, x_plus : ndarray, shape (n,)
    P_minus, P_plus : ndarray, shape (n, n)
    weights : UpdateWeights or array_like
        ``beta`` values; ``gamma = 1 - beta``.

    Returns
    -------
    x_pp : ndarray, shape (n,)
    P_pp : ndarray, shape (n, n)

    Examples
    --------
    >>> x, P = partial_update(np.zeros(1), np.array([2.0]), np.array([[4.0]]),
    ...                       np.array([[1.0]]), UpdateWeights([0.75]))
    >>> float(x[0]), float(P[0, 0])
    (1.5, 1.1875)
    """
    if not isinstance(weights, UpdateWeights):
        weights = UpdateWeights(weights)
    g = weights.gamma
    if g.shape != np.shape(x_minus):
        raise ValueError("weights and state dimensions differ")
    x_pp = g * x_minus + (1.0 - g) * x_plus
    gg = np.outer(g, g)
    P_pp = gg * P_minus + (1.0 - gg) * P_plus
    return x_pp, symmetrize(P_pp)


def schmidt_update_block(belief, n_core, H_x, H_p, R, residual):
    """Schmidt (consider) update written with partitioned blocks.

    The state is split as ``[x; p]`` with ``x`` the first ``n_core`` entries.
    The parameter gain is forced to zero, so ``p`` and ``P_pp`` are left
    untouched while the cross-covariance still absorbs the update.

    Parameters
    ----------
    belief : GaussianBelief
        Full-form prior.
    n_core : int
        Number of core (estimated) states.
    H_x, H_p : ndarray
        Measurement Jacobian blocks, shapes (m, n_core) and (m, n - n_core).
    R : ndarray, shape (m, m)
    residual : ndarray, shape (m,)
        ``y - h(x)``.

    Returns
    -------
    GaussianBelief
    """
    P = belief.covariance()
    Pxx, Pxp, Ppp = P[:n_core, :n_core], P[:n_core, n_core:], P[n_core:, n_core:]
    Ppx = Pxp.T
    H_x = np.atleast_2d(H_x)
    H_p = np.atleast_2d(H_p).reshape(H_x.shape[0], -1)
    S = symmetrize(
        H_x @ Pxx @ H_x.T + H_x @ Pxp @ H_p.T + H_p @ Ppx @ H_x.T + H_p @ Ppp @ H_p.T
        + np.atleast_2d(R)
    )
    c = _factor_innovation(S)
    Kx = cho_solve(c, (Pxx @ H_x.T + Pxp @ H_p.T).T).T
    I_KH = np.eye(n_core) - Kx @ H_x
    Pxx_new = I_KH @ Pxx - Kx @ H_p @ Ppx
    Pxp_new = I_KH @ Pxp - Kx @ H_p @ Ppp
    P_new = np.block([[Pxx_new, Pxp_new], [Pxp_new.T, Ppp]])
    mean = belief.mean.copy()
    mean[:n_core] = mean[:n_core] + Kx @ np.atleast_1d(residual)
    return GaussianBelief(mean, symmetrize(P_new))


def chi2_gate(r, S_innov, threshold):
    """Mahalanobis gate: accept iff ``r^T S^{-1} r <= threshold``."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    c = _factor_innovation(np.atleast_2d(S_innov))
    d2 = float(r @ cho_solve(c, r))
    return d2 <= threshold


def mahalanobis2(r, S_innov):
    """Squared Mahalanobis distance of a residual."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    c = _factor_innovation(np.atleast_2d(S_innov))
    return float(r @ cho_solve(c, r))


class WhitenedMeasurement:
    """Measurement model transformed so that its noise covariance is diagonal.

    ``decorrelation`` selects the transform when ``R`` is not diagonal:
    ``"cholesky"`` gives unit noise, ``"ud"`` gives ``D_r``.
    """

    def __init__(self, sys, y, decorrelation="cholesky"):
        R = np.atleast_2d(np.asarray(sys.R, dtype=float))
        self.sys = sys
        self.y = np.atleast_1d(np.asarray(y, dtype=float))
        if np.count_nonzero(R - np.diag(np.diag(R))) == 0:
            self.T = None
            self.r_diag = np.diag(R).copy()
        elif decorrelation == "cholesky":
            self.T = ("L", cholesky_lower(R))
            self.r_diag = np.ones(R.shape[0])
        elif decorrelation == "ud":
            f = udu_decompose(R)
            self.T = ("U", f.U)
            self.r_diag = f.D.copy()
        else:
            raise ValueError(f"unknown decorrelation {decorrelation!r}")
        self.y_z = self._apply(self.y)

    def _apply(self, v):
        if self.T is None:
            return v
        kind, M = self.T
        if kind == "L":
            return solve_triangular(M, v, lower=True)
        return solve_triangular(M, v, lower=False, unit_diagonal=True)

    def h(self, x, k):
        return self._apply(np.atleast_1d(self.sys.h(x, k)))

    def H(self, x, k):
        return self._apply(np.atleast_2d(self.sys.H(x, k)))

    def __len__(self):
        return len(self.y)


def scalar_sequence(belief, sys, y, k, step, relinearize=True, decorrelation="cholesky"):
    """Drive a per-component measurement loop shared by all filter forms.

    Parameters
    ----------
    step : callable
        ``step(belief, H_row, R_i, r_i) -> belief`` performing one scalar
        assimilation (including any partial update).
    relinearize : bool
        Re-evaluate ``h`` and its Jacobian at the running posterior before each
        component. When off, the prior linearization is reused and the
        residual is corrected to first order.
    """
    meas = WhitenedMeasurement(sys, y, decorrelation)
    x0 = belief.mean
    h0 = meas.h(x0, k)
    H0 = meas.H(x0, k)
    for i in range(len(meas)):
        x = belief.mean
        if relinearize:
            Hi = meas.H(x, k)[i]
            ri = meas.y_z[i] - meas.h(x, k)[i]
        else:
            Hi = H0[i]
            ri = meas.y_z[i] - h0[i] - Hi @ (x - x0)
        belief = step(belief, Hi, meas.r_diag[i], ri)
    return belief


def sequential_update(belief, sys, y, weights, k=0, relinearize=True, decorrelation="cholesky",
                      joseph=False):
    """Scalar-by-scalar full-form update with a partial update per component.

    Non-diagonal ``R`` is decorrelated first (Cholesky by default).

    Returns
    -------
    GaussianBelief
    """
    if not isinstance(weights, UpdateWeights):
        weights = UpdateWeights(weights)

    def step(b, Hi, Ri, ri):
        P = b.covariance()
        xp, Pp, _, _ = linear_update(b.mean, P, Hi[None, :], [[Ri]], [ri], joseph)
        x_pp, P_pp = partial_update(b.mean, xp, P, Pp, weights)
        return GaussianBelief(x_pp, P_pp)

    if weights.is_frozen:
        return belief
    return scalar_sequence(belief, sys, y, k, step, relinearize, decorrelation)


def batch_partial_update(belief, sys, y, weights, k=0, joseph=False):
    """Batch EKF update followed by one partial update."""
    if not isinstance(weights, UpdateWeights):
        weights = UpdateWeights(weights)
    if weights.is_frozen:
        return belief
    post = ekf_update(belief, sys, y, k, joseph)
    x, P = partial_update(belief.mean, post.mean, belief.covariance(), post.covariance(), weights)
    return GaussianBelief(x, P)


def with_mean(belief, mean):
    """Copy of ``belief`` with a new mean."""
    return replace(belief, mean=np.asarray(mean, dtype=float))
