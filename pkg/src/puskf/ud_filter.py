"""UD-factorized filter with partial update.

Covariances are carried as ``P = U diag(D) U^T``. The time update uses the
weighted modified Gram-Schmidt procedure and the measurement update
refactors a small inner matrix so the partial update never forms ``P``.
"""
import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NonFiniteState
from .factorizations import UdFactors, symmetrize, udu_decompose, wmgs
from .filter_core import GaussianBelief, UpdateWeights, _factor_innovation, scalar_sequence


def _weights(w):
    return w if isinstance(w, UpdateWeights) else UpdateWeights(w)


def ud_propagate(U, D, F, G, Q):
    """UD time update ``(U-, D-) = WMGS([F U, G], diag(D, Q))``.

    A non-diagonal ``Q`` is first factored as ``U_q D_q U_q^T`` and ``G`` is
    replaced by ``G U_q``.

    Returns
    -------
    UdFactors
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if np.count_nonzero(Q - np.diag(np.diag(Q))):
        fq = udu_decompose(Q)
        G, q = G @ fq.U, fq.D
    else:
        q = np.diag(Q)
    W = np.hstack([F @ U, G])
    return wmgs(W, np.concatenate([D, q]))


def ud_gain(U, D, H, R):
    """Gain from UD factors.

    Parameters
    ----------
    U : ndarray, shape (n, n)
    D : ndarray, shape (n,)
    H : ndarray, shape (m, n) or (n,)
    R : ndarray, shape (m, m) or float

    Returns
    -------
    K : ndarray, shape (n, m)
    A : ndarray, shape (m, m)
        ``(w^T D w + R)^{-1}``.
    w : ndarray, shape (n, m)
        ``U^T H^T``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    w = U.T @ H.T
    Dw = D[:, None] * w
    S = symmetrize(w.T @ Dw + R)
    A = cho_solve(_factor_innovation(S), np.eye(S.shape[0]))
    A = symmetrize(A)
    K = U @ Dw @ A
    return K, A, w


def ud_partial_update(U, D, w, A, K, weights, x_minus, r):
    """UD partial update.

    Forms ``L = (D w) A (D w)^T`` and refactors
    ``D - L + U^{-1} Gamma U L U^T Gamma U^{-T}``. With ``Gamma = 0`` this is
    the conventional UD update.

    Returns
    -------
    x_pp : ndarray, shape (n,)
    U_pp : ndarray, shape (n, n)
    D_pp : ndarray, shape (n,)
    """
    wts = _weights(weights)
    x_minus = np.asarray(x_minus, dtype=float)
    if wts.is_frozen:
        return x_minus.copy(), np.array(U, dtype=float), np.array(D, dtype=float)
    g = wts.gamma
    Dw = D[:, None] * np.atleast_2d(w).reshape(len(D), -1)
    A = np.atleast_2d(A)
    L = Dw @ A @ Dw.T
    inner = np.diag(D) - L
    if np.any(g):
        GU = g[:, None] * U
        T = solve_triangular(U, GU @ L @ GU.T, lower=False, unit_diagonal=True)
        T = solve_triangular(U, T.T, lower=False, unit_diagonal=True).T
        inner = inner + T
    f = udu_decompose(symmetrize(inner))
    U_pp = U @ f.U
    np.fill_diagonal(U_pp, 1.0)
    x_pp = x_minus + (1.0 - g) * (np.atleast_2d(K) @ np.atleast_1d(r))
    return x_pp, U_pp, f.D


def ud_update(belief, H, R, r, weights):
    """Batch (vector) UD partial update for a given residual."""
    U, D = belief.cov.U, belief.cov.D
    K, A, w = ud_gain(U, D, H, R)
    x, U2, D2 = ud_partial_update(U, D, w, A, K, weights, belief.mean, r)
    return GaussianBelief(x, UdFactors(U2, D2))


def ud_sequential_update(belief, sys, y, weights, k=0, relinearize=True, decorrelation="ud"):
    """Scalar-by-scalar UD partial update.

    Non-diagonal ``R`` is decorrelated with UD factors by default.
    """
    wts = _weights(weights)
    if wts.is_frozen:
        return belief

    def step(b, Hi, Ri, ri):
        return ud_update(b, Hi, Ri, [ri], wts)

    return scalar_sequence(belief, sys, y, k, step, relinearize, decorrelation)


def ud_ekf_propagate(belief, sys, u=None, k=0):
    """Propagate mean and UD factors one step."""
    x = belief.mean
    x_new = np.asarray(sys.f(x, u, k), dtype=float)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteState(f"non-finite state after propagation at step {k}")
    f = ud_propagate(belief.cov.U, belief.cov.D, sys.F(x, u, k), sys.G, sys.Q)
    return GaussianBelief(x_new, f)
