"""Factorization and orthogonalization kernels.

Every filter form in the package is built on the routines in this module:
Cholesky and UD decompositions, a symmetric square root, modified
Gram-Schmidt triangularization (plain and weighted), the condition number,
and the two measurement decorrelation transforms.

All functions are pure: inputs are never modified in place.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NegativeEigenvalue, NotPositiveDefinite, NotPositiveSemiDefinite

#: Values in ``[-PSD_TOL, 0]`` are clamped to zero by ``symmetric_sqrt`` and
#: ``udu_decompose`` (relative to the matrix scale).
PSD_TOL = 1e-10


@dataclass(frozen=True)
class UdFactors:
    """Covariance factors with ``P = U diag(D) U^T``.

    Attributes
    ----------
    U : ndarray, shape (n, n)
        Unit upper-triangular factor.
    D : ndarray, shape (n,)
        Non-negative diagonal entries.
    """

    U: np.ndarray
    D: np.ndarray

    @property
    def n(self):
        return len(self.D)

    def matrix(self):
        """Reconstruct the full covariance."""
        P = (self.U * self.D) @ self.U.T
        return 0.5 * (P + P.T)


def _scale(P):
    d = np.abs(np.diag(P))
    return max(d.max(), np.finfo(float).tiny) if d.size else 1.0


def symmetrize(P):
    """Return ``(P + P^T) / 2``."""
    return 0.5 * (P + P.T)


def cholesky_lower(P):
    """Lower-triangular Cholesky factor with a positive diagonal.

    Parameters
    ----------
    P : array_like, shape (n, n)
        Symmetric positive definite matrix.

    Returns
    -------
    L : ndarray, shape (n, n)
        Factor with ``L @ L.T == P``.

    Raises
    ------
    NotPositiveDefinite
        If any pivot is zero or negative. Nothing is clamped here: this path
        guards full covariances, where corruption must surface.
    """
    P = np.asarray(P, dtype=float)
    if P.size == 0:
        return P.copy()
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.isfinite(L)):
        raise NotPositiveDefinite("non-finite Cholesky factor")
    return L


def udu_decompose(P):
    """Factor ``P = U diag(D) U^T`` with ``U`` unit upper-triangular.

    Elimination proceeds from the bottom-right corner. Pivots in
    ``[-PSD_TOL * scale, 0]`` are clamped to zero and the matching column of
    ``U`` is zeroed below the unit diagonal.

    Parameters
    ----------
    P : array_like, shape (n, n)
        Symmetric positive semi-definite matrix.

    Returns
    -------
    UdFactors

    Raises
    ------
    NotPositiveSemiDefinite
        If a pivot is below the negative tolerance.

    Examples
    --------
    >>> f = udu_decompose([[2.0, 1.0], [1.0, 1.0]])
    >>> f.U
    array([[1., 1.],
           [0., 1.]])
    >>> f.D
    array([1., 1.])
    """
    P = symmetrize(np.array(P, dtype=float))
    n = P.shape[0]
    U = np.eye(n)
    D = np.zeros(n)
    tol = PSD_TOL * _scale(P) if n else 0.0
    for j in range(n - 1, -1, -1):
        d = P[j, j]
        if d < -tol:
            raise NotPositiveSemiDefinite(f"pivot {j} = {d:.3e}")
        if d <= 0.0:
            D[j] = 0.0
            continue
        D[j] = d
        col = P[:j, j] / d
        U[:j, j] = col
        P[:j, :j] -= d * np.outer(col, col)
    return UdFactors(U, D)


def symmetric_sqrt(Q, form="symmetric"):
    """Square root of a symmetric PSD matrix by eigendecomposition.

    Parameters
    ----------
    Q : array_like, shape (n, n)
        Symmetric positive semi-definite matrix.
    form : {"symmetric", "eigen"}
        ``"symmetric"`` returns ``V D^{1/2} V^T`` (unique, symmetric);
        ``"eigen"`` returns ``V D^{1/2}``. Both satisfy ``M M^T = Q``.

    Returns
    -------
    M : ndarray, shape (n, n)

    Raises
    ------
    NegativeEigenvalue
        If an eigenvalue is below ``-PSD_TOL`` relative to the matrix scale.
    """
    Q = symmetrize(np.asarray(Q, dtype=float))
    if Q.size == 0:
        return Q.copy()
    w, V = np.linalg.eigh(Q)
    tol = PSD_TOL * max(np.abs(w).max(), 1.0)
    if w.min() < -tol:
        raise NegativeEigenvalue(f"eigenvalue {w.min():.3e}")
    root = np.sqrt(np.clip(w, 0.0, None))
    M = V * root
    if form == "eigen":
        return M
    if form != "symmetric":
        raise ValueError(f"unknown form {form!r}")
    return symmetrize(M @ V.T)


def _fix_signs(W):
    s = np.where(np.diag(W) < 0, -1.0, 1.0)
    return W * s[:, None]


def mgs_triangularize(M, method="mgs"):
    """Upper-triangular ``W`` with ``W^T W = M^T M``.

    Equivalent to finding an orthogonal ``T`` with ``T M = [W; 0]``.

    Parameters
    ----------
    M : array_like, shape (N, n)
        Stacked matrix, usually ``N >= n``.
    method : {"mgs", "householder"}
        Modified Gram-Schmidt (reference) or LAPACK Householder QR. Both
        return the same non-negative-diagonal factor.

    Returns
    -------
    W : ndarray, shape (n, n)
        Upper triangular with non-negative diagonal. Rank deficiency shows up
        as zero rows.
    """
    A = np.array(M, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    N, n = A.shape
    if method == "householder":
        if N < n:
            A = np.vstack([A, np.zeros((n - N, n))])
        R = np.linalg.qr(A, mode="r")
        return _fix_signs(np.triu(R[:n]))
    if method != "mgs":
        raise ValueError(f"unknown method {method!r}")
    W = np.zeros((n, n))
    ref = np.linalg.norm(A, axis=0).max() if A.size else 0.0
    floor = 1e-14 * ref
    for k in range(n):
        nrm = np.linalg.norm(A[:, k])
        if nrm <= floor:
            A[:, k] = 0.0
            continue
        q = A[:, k] / nrm
        W[k, k] = nrm
        if k + 1 < n:
            r = q @ A[:, k + 1:]
            W[k, k + 1:] = r
            A[:, k + 1:] -= np.outer(q, r)
    return W


def wmgs(W, Dhat):
    """Weighted modified Gram-Schmidt triangularization.

    Produces ``(U, Dbar)`` with ``U diag(Dbar) U^T = W diag(Dhat) W^T``.

    Parameters
    ----------
    W : array_like, shape (n, n + q)
        Rows ``w_k`` to orthogonalize, e.g. ``[F U, G]``.
    Dhat : array_like, shape (n + q,)
        Non-negative weights, e.g. ``[D, diag(Q)]``.

    Returns
    -------
    UdFactors

    Notes
    -----
    When a weighted norm ``v_j Dhat v_j^T`` vanishes the corresponding
    ``u(k, j)`` and ``Dbar_j`` are set to zero, the positive semi-definite
    limit.
    """
    V = np.array(W, dtype=float)
    Dhat = np.asarray(Dhat, dtype=float)
    if np.any(Dhat < 0):
        raise ValueError("WMGS weights must be non-negative")
    n = V.shape[0]
    U = np.eye(n)
    Dbar = np.zeros(n)
    for j in range(n - 1, -1, -1):
        vd = V[j] * Dhat
        dj = vd @ V[j]
        if dj <= 0.0:
            continue
        Dbar[j] = dj
        if j:
            u = (V[:j] @ vd) / dj
            U[:j, j] = u
            V[:j] -= np.outer(u, V[j])
    return UdFactors(U, Dbar)


def condition_number(M):
    """Ratio of the largest to the smallest singular value.

    Returns ``inf`` when the smallest singular value is zero.
    """
    s = np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=float)), compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])


def decorrelate_cholesky(R, H, r):
    """Whiten correlated measurement noise with a Cholesky factor.

    Parameters
    ----------
    R : array_like, shape (m, m)
        Symmetric positive definite noise covariance.
    H : array_like, shape (m, n)
    r : array_like, shape (m,)
        Residual or measurement vector.

    Returns
    -------
    H_z : ndarray, shape (m, n)
        ``S_R^{-1} H``.
    r_z : ndarray, shape (m,)
        ``S_R^{-1} r``; the transformed noise covariance is the identity.
    """
    S = cholesky_lower(R)
    H_z = solve_triangular(S, np.asarray(H, dtype=float), lower=True)
    r_z = solve_triangular(S, np.asarray(r, dtype=float), lower=True)
    return H_z, r_z


def decorrelate_ud(R_c, H, r):
    """Decorrelate measurement noise with UD factors ``R_c = U_r D_r U_r^T``.

    Returns
    -------
    H_z : ndarray, shape (m, n)
        ``U_r^{-1} H``.
    r_z : ndarray, shape (m,)
        ``U_r^{-1} r``.
    D_r : ndarray, shape (m,)
        Diagonal of the transformed noise covariance.
    """
    f = udu_decompose(R_c)
    H_z = solve_triangular(f.U, np.asarray(H, dtype=float), lower=False, unit_diagonal=True)
    r_z = solve_triangular(f.U, np.asarray(r, dtype=float), lower=False, unit_diagonal=True)
    return H_z, r_z, f.D
