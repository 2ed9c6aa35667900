"""Online update-weight selection from second-order EKF terms.

Two selectors are provided:

* DNL (nonlinearity-aware) compares the net second-order mean correction
  ``Y`` with the first-order correction ``Z = K r`` state by state.
* DC (covariance-aware) compares the second-order covariance term ``N`` with
  the first-order covariance reduction ``dP = P H^T S^{-1} H P``.

Both produce ``gamma`` in [0, 1] and ``beta = 1 - gamma``. A pre-tuned
baseline can be combined multiplicatively: ``beta = beta_base (1 - gamma)``.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve

from .filter_core import UpdateWeights, _factor_innovation, kalman_gain


@dataclass
class SecondOrderTerms:
    """Diagnostics gathered while selecting weights for one epoch."""

    Y: Optional[np.ndarray] = None
    Z: Optional[np.ndarray] = None
    Lambda: Optional[np.ndarray] = None
    deltaP: Optional[np.ndarray] = None
    N: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None


@dataclass
class WeightPolicy:
    """How update weights are chosen at each measurement epoch.

    Attributes
    ----------
    mode : {"static", "dnl", "dc"}
    beta : ndarray, optional
        Static weights (``mode="static"``) or the pre-tuned baseline for the
        dynamic modes. ``None`` means a full-update baseline.
    sigma0 : ndarray, optional
        Initial standard deviations used by the scale factor.
    dynamic_mask : ndarray of bool, optional
        States whose weights are selected online. The others keep the
        baseline (or a full update without one). ``None`` selects all.
    """

    mode: str = "static"
    beta: Optional[np.ndarray] = None
    sigma0: Optional[np.ndarray] = None
    dynamic_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("static", "dnl", "dc"):
            raise ValueError(f"unknown weight mode {self.mode!r}")
        if self.beta is not None:
            self.beta = UpdateWeights(self.beta).beta
        if self.sigma0 is not None:
            self.sigma0 = np.asarray(self.sigma0, dtype=float)
            if np.any(self.sigma0 <= 0):
                raise ValueError("sigma0 must be positive")
        if self.dynamic_mask is not None:
            self.dynamic_mask = np.asarray(self.dynamic_mask, dtype=bool)

    @property
    def dynamic(self):
        return self.mode != "static"


def second_order_state_term(f_hessians, P_plus):
    """``0.5 * Tr(Hess f_i P)`` for every state component.

    Parameters
    ----------
    f_hessians : ndarray, shape (n, n, n)
    P_plus : ndarray, shape (n, n)
    """
    Hs = np.asarray(f_hessians, dtype=float)
    return 0.5 * np.einsum("ijk,kj->i", Hs, P_plus)


def second_order_meas_term(h_hessians, P_minus, K):
    """``pi = 0.5 K [Tr(D_1 P), ..., Tr(D_m P)]^T``.

    Parameters
    ----------
    h_hessians : ndarray, shape (m, n, n)
    P_minus : ndarray, shape (n, n)
    K : ndarray, shape (n, m)
    """
    Ds = np.asarray(h_hessians, dtype=float)
    traces = np.einsum("ijk,kj->i", Ds, P_minus)
    return 0.5 * np.atleast_2d(K) @ traces


def dnl_select(Y, Z, f_r):
    """Nonlinearity-aware weights.

    ``Gamma_jj = min(1, f_r,j |Y_j| / |Z_j|)``. A state with ``Z_j = 0``
    receives ``Gamma_jj = 1`` unless ``Y_j = 0`` too, in which case there is no
    second-order effect and the full update is kept.

    Examples
    --------
    >>> dnl_select([0.2], [1.0], [1.0]).beta
    array([0.8])
    """
    Y = np.abs(np.atleast_1d(np.asarray(Y, dtype=float)))
    Z = np.abs(np.atleast_1d(np.asarray(Z, dtype=float)))
    f_r = np.broadcast_to(np.asarray(f_r, dtype=float), Y.shape)
    gamma = np.ones_like(Y)
    nz = Z > 0
    gamma[nz] = np.minimum(1.0, f_r[nz] * Y[nz] / Z[nz])
    gamma[Y == 0] = 0.0
    return UpdateWeights(1.0 - gamma)


def scale_factor(sigma_k, sigma_0, H, P, R):
    """``f_i = (sigma_k,i / sigma_0,i) Tr(H P H^T + R) / Tr(R)``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    trR = np.trace(R)
    ratio = np.trace(H @ P @ H.T + R) / trR
    return np.asarray(sigma_k, dtype=float) / np.asarray(sigma_0, dtype=float) * ratio


def meas_lambda(h_hessians, P_minus):
    """``Lambda_ij = 0.5 Tr(D_i P D_j P)``."""
    Ds = np.asarray(h_hessians, dtype=float)
    DP = Ds @ P_minus
    L = 0.5 * np.einsum("iab,jba->ij", DP, DP)
    return 0.5 * (L + L.T)


def dc_select(P_minus, H, R, Lambda, f_c, terms=None):
    """Covariance-aware weights.

    ``dP = P H^T S^{-1} H P``, ``N = K Lambda (S^{-1} Lambda + I)^{-1} K^T`` and
    ``gamma_j = min(1, f_c,j sqrt(N_jj / dP_jj))`` with ``gamma_j = 0`` where
    ``dP_jj = 0``.

    Examples
    --------
    >>> w = dc_select(np.eye(1), np.eye(1), np.eye(1), np.eye(1), [1.0])
    >>> round(float(w.beta[0]), 5)
    0.42265
    """
    P_minus = np.atleast_2d(np.asarray(P_minus, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    K, S = kalman_gain(P_minus, H, R)
    c = _factor_innovation(S)
    HP = H @ P_minus
    dP = HP.T @ cho_solve(c, HP)
    m = S.shape[0]
    M = cho_solve(c, Lambda) + np.eye(m)
    inner = np.linalg.solve(M.T, Lambda.T).T
    N = K @ inner @ K.T
    dPd = np.diag(dP)
    Nd = np.clip(np.diag(N), 0.0, None)
    f_c = np.broadcast_to(np.asarray(f_c, dtype=float), dPd.shape)
    gamma = np.zeros_like(dPd)
    pos = dPd > 0
    gamma[pos] = np.minimum(1.0, f_c[pos] * np.sqrt(Nd[pos] / dPd[pos]))
    if terms is not None:
        terms.Lambda, terms.deltaP, terms.N = Lambda, dP, N
    return UpdateWeights(1.0 - gamma)


def apply_baseline(dynamic_w, beta_base):
    """``beta_eff = beta_base (1 - Gamma_dyn)``."""
    if not isinstance(dynamic_w, UpdateWeights):
        dynamic_w = UpdateWeights(dynamic_w)
    base = UpdateWeights(beta_base).beta
    return UpdateWeights(base * dynamic_w.beta)


def finite_diff_hessians(fun, x, *args, step=None):
    """Central-difference Hessians of every output component.

    Parameters
    ----------
    fun : callable
        ``fun(x, *args)`` returning a scalar or an m-vector.
    x : array_like, shape (n,)
    step : array_like, optional
        Per-coordinate steps; defaults to ``1e-4 * max(1, |x_i|)``, near the
        roundoff-optimal step for second differences.

    Returns
    -------
    ndarray, shape (m, n, n)
        Symmetrized Hessians.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = 1e-4 * np.maximum(1.0, np.abs(x)) if step is None else np.broadcast_to(step, (n,))

    def ev(dx):
        return np.atleast_1d(np.asarray(fun(x + dx, *args), dtype=float))

    f0 = ev(np.zeros(n))
    out = np.zeros((f0.size, n, n))
    E = np.diag(h)
    for i in range(n):
        fp, fm = ev(E[i]), ev(-E[i])
        out[:, i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
        for j in range(i + 1, n):
            v = (ev(E[i] + E[j]) - ev(E[i] - E[j]) - ev(-E[i] + E[j]) + ev(-E[i] - E[j]))
            out[:, i, j] = out[:, j, i] = v / (4.0 * h[i] * h[j])
    return 0.5 * (out + out.transpose(0, 2, 1))


def f_hessians_of(sys, x, u=None, k=0):
    """Analytic process Hessians if the system ships them, else finite differences."""
    if sys.f_hessians is not None:
        return np.asarray(sys.f_hessians(x, u, k), dtype=float)
    return finite_diff_hessians(lambda z: sys.f(z, u, k), x)


def h_hessians_of(sys, x, k=0):
    """Analytic measurement Hessians if available, else finite differences."""
    if sys.h_hessians is not None:
        return np.asarray(sys.h_hessians(x, k), dtype=float)
    return finite_diff_hessians(lambda z: sys.h(z, k), x)


class ProcessTermTracker:
    """Accumulates the second-order process contribution between updates.

    Each propagation adds ``0.5 Tr(Hess f_i P)`` evaluated at the state and
    covariance entering that step, after carrying the previous sum through
    the Jacobian. For a single propagation per epoch this is exactly the
    one-step term.
    """

    def __init__(self, n):
        self.value = np.zeros(n)

    def step(self, sys, x, P, u=None, k=0):
        F = sys.F(x, u, k)
        self.value = F @ self.value + second_order_state_term(f_hessians_of(sys, x, u, k), P)

    def reset(self):
        self.value = np.zeros_like(self.value)


def select_weights(policy, sys, x_minus, P_minus, y, k=0, process_term=None, terms=None):
    """Weights for one measurement epoch according to ``policy``.

    Parameters
    ----------
    policy : WeightPolicy
    sys : NonlinearSystem
    x_minus, P_minus : ndarray
        Prior mean and full covariance at the epoch.
    y : ndarray
        Measurement vector.
    process_term : ndarray, optional
        Accumulated second-order process term (see ``ProcessTermTracker``).
    terms : SecondOrderTerms, optional
        Filled with diagnostics when given.

    Returns
    -------
    UpdateWeights
    """
    n = len(x_minus)
    if policy.mode == "static":
        return UpdateWeights(np.ones(n) if policy.beta is None else policy.beta)
    H = np.atleast_2d(sys.H(x_minus, k))
    R = np.atleast_2d(sys.R)
    sigma_k = np.sqrt(np.clip(np.diag(P_minus), 0.0, None))
    sigma_0 = policy.sigma0 if policy.sigma0 is not None else sigma_k
    f = scale_factor(sigma_k, sigma_0, H, P_minus, R)
    D = h_hessians_of(sys, x_minus, k)
    if policy.mode == "dnl":
        K, _ = kalman_gain(P_minus, H, R)
        r = np.atleast_1d(y) - np.atleast_1d(sys.h(x_minus, k))
        Z = K @ r
        fterm = np.zeros(n) if process_term is None else process_term
        Y = fterm - second_order_meas_term(D, P_minus, K)
        w = dnl_select(Y, Z, f)
        if terms is not None:
            terms.Y, terms.Z = Y, Z
    else:
        w = dc_select(P_minus, H, R, meas_lambda(D, P_minus), f, terms)
    if terms is not None:
        terms.scale = f
    if policy.dynamic_mask is not None:
        w = UpdateWeights(np.where(policy.dynamic_mask, w.beta, 1.0))
    if policy.beta is not None:
        w = apply_baseline(w, policy.beta)
    return w
