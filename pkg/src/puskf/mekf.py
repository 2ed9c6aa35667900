"""Quaternion algebra and the partial-update multiplicative EKF.

Quaternions are stored scalar-last, ``q = [q1, q2, q3, q4]`` with vector part
``q[:3]`` and scalar ``q[3]``. The attitude matrix is

    C(q) = (2 q4^2 - 1) I - 2 q4 [q_v x] + 2 q_v q_v^T

and the product is defined so that ``C(a * b) = C(a) C(b)``. An estimate is
corrected by a small rotation on the left, ``q = dq(dtheta) * q_hat``, with
``C(dq) ~ I - [dtheta x]``.

Worked example: ``a`` = 90 deg about z, ``[0, 0, sin(pi/4), cos(pi/4)]``.
``C(a)`` maps the frame-A vector ``[1, 0, 0]`` to ``[0, -1, 0]`` (a passive
rotation), and ``a * a`` is ``[0, 0, 1, 0]``, 180 deg about z.
"""
from dataclasses import dataclass, field

import numpy as np

from .factorizations import UdFactors, symmetrize
from .filter_core import (
    GaussianBelief,
    NonlinearSystem,
    SqrtFactor,
    UpdateWeights,
    kalman_gain,
    partial_update,
    sequential_update,
)
from .sqrt_filter import process_noise_rows, sr_propagate, sr_sequential_update, sr_vector_update
from .ud_filter import ud_propagate, ud_sequential_update, ud_update

IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


def skew(v):
    """Cross-product matrix ``[v x]``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_multiply(a, b):
    """Quaternion product with ``C(a * b) = C(a) C(b)``.

    Examples
    --------
    >>> quat_multiply(IDENTITY_QUAT, [0.0, 0.0, 1.0, 0.0])
    array([0., 0., 1., 0.])
    """
    a1, a2, a3, a4 = np.asarray(a, dtype=float)
    b1, b2, b3, b4 = np.asarray(b, dtype=float)
    # scalar part a4 b4 - a_v.b_v, vector part a4 b_v + b4 a_v - a_v x b_v
    return np.array([
        a4 * b1 + b4 * a1 - (a2 * b3 - a3 * b2),
        a4 * b2 + b4 * a2 - (a3 * b1 - a1 * b3),
        a4 * b3 + b4 * a3 - (a1 * b2 - a2 * b1),
        a4 * b4 - a1 * b1 - a2 * b2 - a3 * b3,
    ])


def quat_inverse(q):
    """Inverse of a unit quaternion (its conjugate)."""
    q = np.asarray(q, dtype=float)
    return np.concatenate([-q[:3], q[3:]])


def quat_to_dcm(q):
    """Attitude matrix of a unit quaternion."""
    x, y, z, s = np.asarray(q, dtype=float)
    d = 2.0 * s * s - 1.0
    return np.array([
        [d + 2 * x * x, 2 * (x * y + s * z), 2 * (x * z - s * y)],
        [2 * (x * y - s * z), d + 2 * y * y, 2 * (y * z + s * x)],
        [2 * (x * z + s * y), 2 * (y * z - s * x), d + 2 * z * z],
    ])


def dcm_to_quat(C):
    """Unit quaternion with ``quat_to_dcm(q) = C`` and non-negative scalar part."""
    C = np.asarray(C, dtype=float)
    tr = np.trace(C)
    # largest-pivot branch for accuracy
    cands = np.array([C[0, 0], C[1, 1], C[2, 2], tr])
    i = int(np.argmax(cands))
    q = np.empty(4)
    if i == 3:
        q[3] = 0.5 * np.sqrt(1.0 + tr)
        f = 0.25 / q[3]
        q[0] = (C[1, 2] - C[2, 1]) * f
        q[1] = (C[2, 0] - C[0, 2]) * f
        q[2] = (C[0, 1] - C[1, 0]) * f
    else:
        j, k = (i + 1) % 3, (i + 2) % 3
        q[i] = 0.5 * np.sqrt(1.0 + 2.0 * C[i, i] - tr)
        f = 0.25 / q[i]
        q[j] = (C[i, j] + C[j, i]) * f
        q[k] = (C[i, k] + C[k, i]) * f
        q[3] = (C[j, k] - C[k, j]) * f
    if q[3] < 0:
        q = -q
    return q / np.linalg.norm(q)


def rotvec_to_quat(phi):
    """Exact quaternion for the rotation vector ``phi`` (``C = exp(-[phi x])``)."""
    phi = np.asarray(phi, dtype=float)
    a = np.linalg.norm(phi)
    if a < 1e-12:
        return quat_normalize(np.concatenate([0.5 * phi, [1.0]]))
    return np.concatenate([np.sin(0.5 * a) * phi / a, [np.cos(0.5 * a)]])


def quat_to_rotvec(q):
    """Rotation vector of a unit quaternion (inverse of ``rotvec_to_quat``)."""
    q = np.asarray(q, dtype=float)
    if q[3] < 0:
        q = -q
    s = np.linalg.norm(q[:3])
    if s < 1e-12:
        return 2.0 * q[:3]
    return 2.0 * np.arctan2(s, q[3]) * q[:3] / s


def attitude_error(q_true, q_est):
    """Small angle ``dtheta`` with ``q_true = dq(dtheta) * q_est``."""
    return quat_to_rotvec(quat_multiply(q_true, quat_inverse(q_est)))


def small_angle_quat(dtheta, beta=None):
    """Normalized ``[beta * dtheta / 2, 1]``.

    Examples
    --------
    >>> small_angle_quat([0.0, 0.0, 0.0])
    array([0., 0., 0., 1.])
    """
    d = np.asarray(dtheta, dtype=float)
    if beta is not None:
        d = np.asarray(beta, dtype=float) * d
    return quat_normalize(np.concatenate([0.5 * d, [1.0]]))


@dataclass(frozen=True)
class Block:
    """One named state block: ``kind`` is ``"quat"`` or ``"vec"``."""

    name: str
    kind: str
    size: int = 3

    @property
    def state_dim(self):
        return 4 if self.kind == "quat" else self.size

    @property
    def error_dim(self):
        return 3 if self.kind == "quat" else self.size


class MekfLayout:
    """Index map between the full state and the reduced error state."""

    def __init__(self, blocks):
        self.blocks = tuple(blocks)
        self.state_slices, self.error_slices = {}, {}
        i = j = 0
        for b in self.blocks:
            if b.kind not in ("quat", "vec"):
                raise ValueError(f"unknown block kind {b.kind!r}")
            self.state_slices[b.name] = slice(i, i + b.state_dim)
            self.error_slices[b.name] = slice(j, j + b.error_dim)
            i += b.state_dim
            j += b.error_dim
        self.state_dim, self.error_dim = i, j

    def inject(self, x, dx):
        """Apply an error-state correction to the full state."""
        x = np.array(x, dtype=float)
        for b in self.blocks:
            s, e = self.state_slices[b.name], self.error_slices[b.name]
            if b.kind == "quat":
                x[s] = quat_normalize(quat_multiply(small_angle_quat(dx[e]), x[s]))
            else:
                x[s] += dx[e]
        return x

    def difference(self, x_true, x_est):
        """Error-state vector ``x_true (-) x_est``."""
        out = np.empty(self.error_dim)
        for b in self.blocks:
            s, e = self.state_slices[b.name], self.error_slices[b.name]
            if b.kind == "quat":
                out[e] = attitude_error(x_true[s], x_est[s])
            else:
                out[e] = x_true[s] - x_est[s]
        return out


@dataclass(frozen=True)
class MekfState:
    """Nominal state plus error-state covariance in any representation.

    Attributes
    ----------
    layout : MekfLayout
    x : ndarray, shape (layout.state_dim,)
    cov : ndarray | SqrtFactor | UdFactors
        Error-state covariance (the error mean is reset to zero).
    """

    layout: MekfLayout
    x: np.ndarray
    cov: object
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def form(self):
        return GaussianBelief(self.x, self.cov).form

    def covariance(self):
        return GaussianBelief(np.zeros(self.layout.error_dim), self.cov).covariance()

    def quaternion(self, name):
        return self.x[self.layout.state_slices[name]]

    def error_belief(self):
        return GaussianBelief(np.zeros(self.layout.error_dim), self.cov)


def _linear_system(H, R):
    H = np.atleast_2d(H)
    n = H.shape[1]
    return NonlinearSystem(
        f=lambda x, u, k: x, h=lambda x, k: H @ x, F=lambda x, u, k: np.eye(n),
        H=lambda x, k: H, G=np.eye(n), Q=np.zeros((n, n)), R=np.atleast_2d(R), name="linearized",
    )


def error_state_update(belief, H, R, r, weights, mode="batch"):
    """Partial update of a zero-mean error state with residual ``r``.

    Returns the corrected error belief, whose mean is ``beta * (K r)`` in batch
    mode. Dispatches on the covariance representation.
    """
    w = weights if isinstance(weights, UpdateWeights) else UpdateWeights(weights)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if w.is_frozen:
        return belief
    form = belief.form
    if mode == "sequential":
        sys = _linear_system(H, R)
        y = r + H @ belief.mean
        if form == "full":
            return sequential_update(belief, sys, y, w)
        if form == "sqrt":
            return sr_sequential_update(belief, sys, y, w)
        return ud_sequential_update(belief, sys, y, w)
    if mode != "batch":
        raise ValueError(f"unknown update mode {mode!r}")
    x = belief.mean
    if form == "full":
        P = belief.covariance()
        K, _ = kalman_gain(P, H, R)
        x_plus = x + K @ r
        P_plus = symmetrize(P - K @ H @ P)
        x_pp, P_pp = partial_update(x, x_plus, P, P_plus, w)
        return GaussianBelief(x_pp, P_pp)
    if form == "sqrt":
        x_pp, S_pp = sr_vector_update(belief.cov.S, x, H, R, r, np.zeros_like(r), w)
        return GaussianBelief(x_pp, SqrtFactor(S_pp))
    return ud_update(belief, H, R, r, w)


def pu_mekf_update(state, H, R, r, weights, mode="batch"):
    """Partial-update MEKF measurement update.

    Computes ``dx++ = beta * (K r)``, corrects quaternion blocks
    multiplicatively (then renormalizes) and additive blocks additively, and
    partially updates the error covariance with the same weights. The error
    state is reset to zero afterwards.

    Parameters
    ----------
    state : MekfState
    H : ndarray, shape (m, d)
        Error-state Jacobian.
    R : ndarray, shape (m, m)
    r : ndarray, shape (m,)
        Residual ``y - h(x_hat)``.
    weights : UpdateWeights or array_like, shape (d,)
    mode : {"batch", "sequential"}

    Returns
    -------
    MekfState
    """
    post = error_state_update(state.error_belief(), H, R, r, weights, mode)
    x = state.layout.inject(state.x, post.mean)
    return MekfState(state.layout, x, post.cov, state.meta)


def propagate_covariance(cov, Phi, G, Q):
    """``Phi P Phi^T + G Q G^T`` in the representation of ``cov``."""
    Phi = np.asarray(Phi, dtype=float)
    if isinstance(cov, SqrtFactor):
        return SqrtFactor(sr_propagate(cov.S, Phi, process_noise_rows(G, Q)))
    if isinstance(cov, UdFactors):
        return ud_propagate(cov.U, cov.D, Phi, G, Q)
    P = np.asarray(cov)
    return symmetrize(Phi @ P @ Phi.T + G @ Q @ G.T)
