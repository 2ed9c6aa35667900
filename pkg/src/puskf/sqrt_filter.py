"""Potter square-root filter with partial update.

Covariances are carried as lower-triangular factors ``S`` with ``P = S S^T``.
Scalar measurements use Potter's update; the partial update and the time
update re-triangularize stacked blocks with modified Gram-Schmidt.
"""
import numpy as np
from scipy.linalg import solve_triangular

from .errors import NonFiniteState, NonPositiveNoise, SingularInnovation
from .factorizations import cholesky_lower, mgs_triangularize, symmetric_sqrt
from .filter_core import GaussianBelief, SqrtFactor, UpdateWeights, scalar_sequence


def _weights(w):
    return w if isinstance(w, UpdateWeights) else UpdateWeights(w)


def process_noise_rows(G, Q):
    """Rows ``Q^{T/2} G^T`` appended during the square-root time update."""
    G = np.asarray(G, dtype=float)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if not np.any(Q):
        return np.zeros((0, G.shape[0]))
    return symmetric_sqrt(Q).T @ G.T


def sr_propagate(S_plus, F, Q_sqrtT=None):
    """Square-root time update.

    Parameters
    ----------
    S_plus : ndarray, shape (n, n)
        Posterior factor.
    F : ndarray, shape (n, n)
        State transition matrix.
    Q_sqrtT : ndarray, shape (q, n), optional
        Process-noise rows ``Q^{T/2} G^T`` (see ``process_noise_rows``).

    Returns
    -------
    S_minus : ndarray, shape (n, n)
        Lower-triangular factor of ``F P F^T + G Q G^T``.
    """
    top = np.asarray(S_plus).T @ np.asarray(F).T
    M = top if Q_sqrtT is None or len(Q_sqrtT) == 0 else np.vstack([top, Q_sqrtT])
    return mgs_triangularize(M).T


def potter_scalar_update(S_minus, x_minus, H_i, R_i, y_i, yhat_i):
    """Potter update for one scalar measurement.

    Parameters
    ----------
    S_minus : ndarray, shape (n, n)
    x_minus : ndarray, shape (n,)
    H_i : ndarray, shape (n,)
        Measurement row.
    R_i : float
        Measurement variance, strictly positive.
    y_i, yhat_i : float
        Measurement and its prediction.

    Returns
    -------
    x_plus : ndarray, shape (n,)
    S_plus : ndarray, shape (n, n)
        Generally not triangular.
    a : float
        ``1 / (phi^T phi + R_i)``.
    phi : ndarray, shape (n,)
        ``S^T H_i^T``.

    Examples
    --------
    >>> x, S, a, phi = potter_scalar_update(np.eye(1), np.zeros(1), np.ones(1), 1.0, 0.0, 0.0)
    >>> round(float(a), 12), round(float(S[0, 0] ** 2), 12)
    (0.5, 0.5)
    """
    if not R_i > 0:
        raise NonPositiveNoise(f"measurement variance must be positive, got {R_i}")
    S_minus = np.asarray(S_minus, dtype=float)
    phi = S_minus.T @ np.asarray(H_i, dtype=float)
    a = 1.0 / (phi @ phi + R_i)
    b = 1.0 / (1.0 + np.sqrt(a * R_i))
    Sphi = S_minus @ phi
    K = a * Sphi
    S_plus = S_minus - (a * b) * np.outer(Sphi, phi)
    x_plus = x_minus + K * (y_i - yhat_i)
    return x_plus, S_plus, a, phi


def sr_partial_update_scalar(S_minus, S_plus, a, phi, weights, x_minus, x_plus):
    """Square-root partial update after a Potter step.

    ``S++`` is the transposed MGS factor of ``[S+^T; sqrt(a) phi^T S-^T Gamma]``
    so that ``S++ S++^T = Gamma (P- - P+) Gamma + P+``.

    Returns
    -------
    x_pp : ndarray, shape (n,)
    S_pp : ndarray, shape (n, n)
        Lower triangular.
    """
    w = _weights(weights)
    if w.is_frozen:
        return np.array(x_minus, dtype=float), np.array(S_minus, dtype=float)
    g = w.gamma
    row = np.sqrt(a) * (np.asarray(S_minus) @ phi) * g
    M = np.vstack([np.asarray(S_plus).T, row[None, :]])
    S_pp = mgs_triangularize(M).T
    x_pp = g * x_minus + (1.0 - g) * x_plus
    return x_pp, S_pp


def sr_vector_update(S_minus, x_minus, H, R, y, yhat, weights):
    """Square-root partial update for a vector measurement.

    The conventional posterior comes from triangularizing the augmented array
    ``[[R^{T/2}, 0], [S^T H^T, S^T]]``. Its upper-right block ``Y`` satisfies
    ``Y^T Y = P H^T (H P H^T + R)^{-1} H P``, i.e. ``Y = Rt^{T/2} H P`` for a
    square root ``Rt^{1/2}`` of the inverse innovation covariance, and the
    partial update re-triangularizes ``[S+^T; Y Gamma]``.

    Returns
    -------
    x_pp : ndarray, shape (n,)
    S_pp : ndarray, shape (n, n)
        Lower triangular.
    """
    w = _weights(weights)
    S_minus = np.asarray(S_minus, dtype=float)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if w.is_frozen:
        return np.array(x_minus, dtype=float), S_minus.copy()
    m, n = H.shape
    RT = cholesky_lower(R).T
    A = np.zeros((m + n, m + n))
    A[:m, :m] = RT
    A[m:, :m] = S_minus.T @ H.T
    A[m:, m:] = S_minus.T
    W = mgs_triangularize(A)
    X, Y, Z = W[:m, :m], W[:m, m:], W[m:, m:]
    if np.any(np.diag(X) <= 0):
        raise SingularInnovation("innovation factor is singular")
    K = solve_triangular(X, Y, lower=False).T
    x_plus = x_minus + K @ (np.atleast_1d(y) - np.atleast_1d(yhat))
    g = w.gamma
    M = np.vstack([Z, Y * g])
    S_pp = mgs_triangularize(M).T
    x_pp = g * x_minus + (1.0 - g) * x_plus
    return x_pp, S_pp


def sr_sequential_update(belief, sys, y, weights, k=0, relinearize=True, decorrelation="cholesky"):
    """Sequential Potter partial update over all measurement components."""
    w = _weights(weights)
    if w.is_frozen:
        return belief

    def step(b, Hi, Ri, ri):
        S = b.cov.S
        xp, Sp, a, phi = potter_scalar_update(S, b.mean, Hi, Ri, ri, 0.0)
        x_pp, S_pp = sr_partial_update_scalar(S, Sp, a, phi, w, b.mean, xp)
        return GaussianBelief(x_pp, SqrtFactor(S_pp))

    return scalar_sequence(belief, sys, y, k, step, relinearize, decorrelation)


def sr_ekf_propagate(belief, sys, u=None, k=0, noise_rows=None):
    """Propagate mean and square-root factor one step."""
    x = belief.mean
    x_new = np.asarray(sys.f(x, u, k), dtype=float)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteState(f"non-finite state after propagation at step {k}")
    if noise_rows is None:
        noise_rows = process_noise_rows(sys.G, sys.Q)
    S = sr_propagate(belief.cov.S, sys.F(x, u, k), noise_rows)
    return GaussianBelief(x_new, SqrtFactor(S))
