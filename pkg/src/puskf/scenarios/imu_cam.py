"""IMU-camera extrinsic calibration with a multiplicative EKF.

Full state (23): ``[q_WI, p, v, b_g, b_a, p_C, q_CI]`` where ``q_WI`` rotates
world vectors into the IMU frame, ``p`` and ``v`` are the IMU position and
velocity in the world frame, ``p_C`` is the camera position in the IMU frame
(lever arm) and ``q_CI`` rotates IMU vectors into the camera frame.
Error state (21): ``[dtheta, dp, dv, db_g, db_a, dp_C, dalpha]``.

A landmark ``p_f`` is observed through the pinhole model applied to

    h = C(q_CI) (C(q_WI) (p_f - p) - p_C).

The camera looks along +x of the world frame (z up) at four square markers in
a vertical plane.
"""
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, EstimationError, NoVisibleFeatures
from ..factorizations import cholesky_lower, condition_number, udu_decompose
from ..filter_core import SqrtFactor, UpdateWeights
from ..mekf import (
    Block,
    MekfLayout,
    MekfState,
    dcm_to_quat,
    propagate_covariance,
    pu_mekf_update,
    quat_multiply,
    quat_to_dcm,
    quat_to_rotvec,
    rotvec_to_quat,
    skew,
)
from ..rng import streams
from ..runner import RecordBuilder, as_policy
from .base import TruthRun

GRAVITY = np.array([0.0, 0.0, -9.81])

LAYOUT = MekfLayout([
    Block("q_WI", "quat"), Block("p", "vec"), Block("v", "vec"), Block("b_g", "vec"),
    Block("b_a", "vec"), Block("p_C", "vec"), Block("q_CI", "quat"),
])

#: camera axes (x right, y down, z forward) for a camera looking along world +x
CAMERA_MOUNT = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])

#: variant -> error-covariance representation
MEKF_FORMS = {"ekf": "full", "schmidt": "full", "pu": "full", "mekf-pu": "full", "sr-pu": "sqrt", "ud-pu": "ud"}


def marker_landmarks(distance=1.1, centre_height=0.0, spacing=0.5, side=0.2):
    """16 corners of four square markers in the plane ``x = distance``."""
    pts = []
    for cy in (-0.5 * spacing, 0.5 * spacing):
        for cz in (-0.5 * spacing, 0.5 * spacing):
            for dy, dz in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                pts.append([distance, cy + 0.5 * side * dy, centre_height + cz + 0.5 * side * dz])
    return np.array(pts)


@dataclass
class ImuCamParams:
    """IMU-camera simulation settings.

    Uncertainties are 1-sigma. Noise densities are continuous-time values of
    a consumer-grade MEMS IMU; the intrinsics follow from the field of view
    and resolution.
    """

    sigma_attitude_deg: float = 2.0
    sigma_position: float = 0.05
    sigma_velocity: float = 0.05
    sigma_gyro_bias: float = 0.005
    sigma_accel_bias: float = 0.05
    sigma_lever: float = 0.05
    sigma_extrinsic_deg: float = 2.0
    camera_rate: float = 20.0
    imu_rate: float = 100.0
    pixel_sigma: float = 2.0
    width: int = 640
    height: int = 480
    hfov_deg: float = 58.0
    vfov_deg: float = 45.0
    duration: float = 60.0
    gyro_noise: float = 6.1e-5
    accel_noise: float = 1.4e-3
    gyro_walk: float = 6.0e-6
    accel_walk: float = 5.0e-5
    translation_amplitude: np.ndarray = field(default_factory=lambda: np.array([0.12, 0.15, 0.12]))
    angular_amplitude_deg: np.ndarray = field(default_factory=lambda: np.array([6.0, 6.0, 8.0]))
    lever_truth: np.ndarray = field(default_factory=lambda: np.array([0.05, -0.03, 0.02]))
    extrinsic_truth_deg: np.ndarray = field(default_factory=lambda: np.array([3.0, -2.0, 4.0]))
    landmarks: np.ndarray = field(default_factory=marker_landmarks)
    beta: np.ndarray = field(default_factory=lambda: np.repeat([0.95, 0.95, 1.0, 1.0, 1.0, 0.25, 0.25], 3))
    gate_threshold: float = None

    def __post_init__(self):
        for name in ("camera_rate", "imu_rate", "pixel_sigma", "duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        ratio = self.imu_rate / self.camera_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("camera rate must divide the IMU rate")
        self.translation_amplitude = np.asarray(self.translation_amplitude, float)
        self.angular_amplitude_deg = np.asarray(self.angular_amplitude_deg, float)
        self.lever_truth = np.asarray(self.lever_truth, float)
        self.extrinsic_truth_deg = np.asarray(self.extrinsic_truth_deg, float)
        self.landmarks = np.asarray(self.landmarks, float)
        self.beta = np.asarray(self.beta, float)

    @property
    def dt(self):
        return 1.0 / self.imu_rate

    @property
    def camera_stride(self):
        return int(round(self.imu_rate / self.camera_rate))

    @property
    def n_steps(self):
        return int(round(self.duration * self.imu_rate))

    @property
    def intrinsics(self):
        fx = 0.5 * self.width / np.tan(np.radians(0.5 * self.hfov_deg))
        fy = 0.5 * self.height / np.tan(np.radians(0.5 * self.vfov_deg))
        return fx, fy, 0.5 * self.width, 0.5 * self.height

    @property
    def sigma0(self):
        a, e = np.radians(self.sigma_attitude_deg), np.radians(self.sigma_extrinsic_deg)
        return np.repeat([a, self.sigma_position, self.sigma_velocity, self.sigma_gyro_bias,
                          self.sigma_accel_bias, self.sigma_lever, e], 3)

    @property
    def noise_psd(self):
        """Diagonal of the continuous noise PSD for ``[n_g, n_a, n_wg, n_wa]``."""
        return np.repeat([self.gyro_noise, self.accel_noise, self.gyro_walk, self.accel_walk], 3) ** 2


# ---------------------------------------------------------------- model ---

def error_dynamics(C_WI, omega_hat, accel_hat):
    """Continuous error-state ``F`` (21x21) and noise map ``G`` (21x12)."""
    F = np.zeros((21, 21))
    G = np.zeros((21, 12))
    Ct = C_WI.T
    I3 = np.eye(3)
    F[0:3, 0:3] = -skew(omega_hat)
    F[0:3, 9:12] = -I3
    F[3:6, 6:9] = I3
    F[6:9, 0:3] = -Ct @ skew(accel_hat)
    F[6:9, 12:15] = -Ct
    G[0:3, 0:3] = -I3
    G[6:9, 3:6] = -Ct
    G[9:12, 6:9] = I3
    G[12:15, 9:12] = I3
    return F, G


def camera_points(x, landmarks):
    """Landmarks in the camera frame, plus the intermediate IMU-frame vectors."""
    C_WI = quat_to_dcm(x[0:4])
    C_CI = quat_to_dcm(x[19:23])
    h_I = (landmarks - x[4:7]) @ C_WI.T
    h_C = (h_I - x[16:19]) @ C_CI.T
    return h_C, h_I, C_WI, C_CI


def project(h_C, intrinsics):
    """Pinhole projection of camera-frame points, shape (m, 2)."""
    fx, fy, cx, cy = intrinsics
    z = h_C[:, 2]
    return np.column_stack([fx * h_C[:, 0] / z + cx, fy * h_C[:, 1] / z + cy])


def visible(h_C, params):
    """Mask of points in front of the camera and inside the image."""
    front = h_C[:, 2] > 1e-6
    uv = project(np.where(front[:, None], h_C, 1.0), params.intrinsics)
    inside = (uv[:, 0] >= 0) & (uv[:, 0] <= params.width) & (uv[:, 1] >= 0) & (uv[:, 1] <= params.height)
    return front & inside


def measurement_jacobian(x, landmarks, intrinsics):
    """Stacked ``2m x 21`` pixel Jacobian and predicted pixels.

    Each feature contributes ``J_proj [C_CI [h_I x], -C_CI C_WI, 0, 0, 0,
    -C_CI, [h_C x]]``.
    """
    fx, fy, _, _ = intrinsics
    h_C, h_I, C_WI, C_CI = camera_points(x, landmarks)
    m = len(landmarks)
    X, Y, Z = h_C[:, 0], h_C[:, 1], h_C[:, 2]
    Jp = np.zeros((m, 2, 3))
    Jp[:, 0, 0] = fx / Z
    Jp[:, 0, 2] = -fx * X / Z ** 2
    Jp[:, 1, 1] = fy / Z
    Jp[:, 1, 2] = -fy * Y / Z ** 2
    D = np.zeros((m, 3, 21))
    D[:, :, 0:3] = C_CI @ _skew_batch(h_I)
    D[:, :, 3:6] = -(C_CI @ C_WI)
    D[:, :, 15:18] = -C_CI
    D[:, :, 18:21] = _skew_batch(h_C)
    H = np.einsum("mij,mjk->mik", Jp, D).reshape(2 * m, 21)
    return H, project(h_C, intrinsics)


def _skew_batch(v):
    out = np.zeros((len(v), 3, 3))
    out[:, 0, 1], out[:, 0, 2] = -v[:, 2], v[:, 1]
    out[:, 1, 0], out[:, 1, 2] = v[:, 2], -v[:, 0]
    out[:, 2, 0], out[:, 2, 1] = -v[:, 1], v[:, 0]
    return out


def propagate_nominal(x, gyro, accel, dt):
    """Strapdown step with zero-order-hold rates and specific force."""
    x = x.copy()
    w = gyro - x[10:13]
    f = accel - x[13:16]
    C = quat_to_dcm(x[0:4])
    a_w = C.T @ f + GRAVITY
    x[4:7] = x[4:7] + x[7:10] * dt + 0.5 * a_w * dt * dt
    x[7:10] = x[7:10] + a_w * dt
    q = quat_multiply(rotvec_to_quat(w * dt), x[0:4])
    x[0:4] = q / np.linalg.norm(q)
    return x


def imu_cam_model(params=None):
    """Builders used by the filter: dynamics, noise, and the pixel model."""
    p = params or ImuCamParams()
    return {
        "layout": LAYOUT,
        "error_dynamics": error_dynamics,
        "measurement_jacobian": lambda x, lm: measurement_jacobian(x, lm, p.intrinsics),
        "propagate": propagate_nominal,
        "noise_psd": p.noise_psd,
    }


# ---------------------------------------------------------------- truth ---

def _reference_motion(params, rng):
    """Amplitudes, frequencies and phases of the sinusoidal reference."""
    base = np.array([0.071, 0.113, 0.089]) * np.sqrt(2.0)
    f1 = base
    f2 = base * np.sqrt(3.0) * 1.07
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(4, 3))
    return f1, f2, phases


def _reference(t, params, motion):
    f1, f2, ph = motion
    w1, w2 = 2 * np.pi * f1, 2 * np.pi * f2
    A = params.translation_amplitude
    B = np.radians(params.angular_amplitude_deg)
    t = np.asarray(t)[:, None]
    pos = A * (0.6 * np.sin(w1 * t + ph[0]) + 0.4 * np.sin(w2 * t + ph[1]))
    vel = A * (0.6 * w1 * np.cos(w1 * t + ph[0]) + 0.4 * w2 * np.cos(w2 * t + ph[1]))
    ang = B * (0.6 * np.sin(w1 * t + ph[2]) + 0.4 * np.sin(w2 * t + ph[3]))
    return pos, vel, ang


def imu_cam_truth(params=None, seed=0):
    """Simulate truth, IMU samples and pixel measurements.

    The reference attitude is ``C_WI(t) = exp(-[phi(t) x])`` for a smooth
    rotation vector ``phi``. Body rates are chosen so that the zero-order-hold
    exponential reproduces the reference attitude exactly at every IMU sample
    and the specific force reproduces the reference velocity; the truth state
    is the strapdown integral of the noise-free IMU stream.

    Returns
    -------
    TruthRun
        ``measurements`` maps IMU step -> ``(landmark_ids, pixels)`` and
        ``extras["imu"]`` holds the (K, 6) gyro/accel samples applied over
        ``[t_k, t_k+1)``.
    """
    p = params or ImuCamParams()
    rng = streams(seed)
    K, dt = p.n_steps, p.dt
    times = np.arange(K + 1) * dt
    motion = _reference_motion(p, rng["aux"])
    pos, vel, ang = _reference(times, p, motion)
    q_ref = np.array([rotvec_to_quat(a) for a in ang])
    sig0 = p.sigma0
    b_g0 = sig0[9:12] * rng["init"].standard_normal(3)
    b_a0 = sig0[12:15] * rng["init"].standard_normal(3)
    q_CI = dcm_to_quat(quat_to_dcm(rotvec_to_quat(np.radians(p.extrinsic_truth_deg))) @ CAMERA_MOUNT)

    X = np.zeros((K + 1, 23))
    X[0, 0:4] = q_ref[0]
    X[0, 4:7], X[0, 7:10] = pos[0], vel[0]
    X[0, 10:13], X[0, 13:16] = b_g0, b_a0
    X[0, 16:19], X[0, 19:23] = p.lever_truth, q_CI
    imu = np.zeros((K, 6))
    proc = rng["process"]
    sq = np.sqrt(dt)
    for k in range(K):
        xk = X[k]
        dq = quat_multiply(q_ref[k + 1], np.concatenate([-xk[0:3], xk[3:4]]))
        w = quat_to_rotvec(dq) / dt
        C = quat_to_dcm(xk[0:4])
        f = C @ ((vel[k + 1] - xk[7:10]) / dt - GRAVITY)
        nxt = propagate_nominal(np.concatenate([xk[:10], np.zeros(6), xk[16:]]), w, f, dt)
        b_g = xk[10:13] + p.gyro_walk * sq * proc.standard_normal(3)
        b_a = xk[13:16] + p.accel_walk * sq * proc.standard_normal(3)
        X[k + 1] = nxt
        X[k + 1, 10:13], X[k + 1, 13:16] = b_g, b_a
        imu[k, 0:3] = w + xk[10:13] + p.gyro_noise / sq * proc.standard_normal(3)
        imu[k, 3:6] = f + xk[13:16] + p.accel_noise / sq * proc.standard_normal(3)

    meas = {}
    mrng = rng["measurement"]
    for k in range(p.camera_stride, K + 1, p.camera_stride):
        h_C, _, _, _ = camera_points(X[k], p.landmarks)
        ids = np.flatnonzero(visible(h_C, p))
        uv = project(h_C[ids], p.intrinsics) + p.pixel_sigma * mrng.standard_normal((len(ids), 2))
        meas[k] = (ids, uv)

    P0 = np.diag(sig0 ** 2)
    draw = sig0 * rng["init"].standard_normal(21)
    x0 = LAYOUT.inject(X[0], -draw)
    x0[10:16] = 0.0  # biases start at zero; their truth is a prior draw
    return TruthRun(times, X, meas, x0, P0, extras={"imu": imu})


# --------------------------------------------------------------- filter ---

def _initial_cov(P0, kind):
    if kind == "sqrt":
        return SqrtFactor(cholesky_lower(P0))
    if kind == "ud":
        return udu_decompose(P0)
    return np.array(P0, dtype=float)


def _factor_condition(cov):
    if isinstance(cov, SqrtFactor):
        return condition_number(cov.S)
    if hasattr(cov, "U"):
        return condition_number(cov.U * np.sqrt(np.clip(cov.D, 0.0, None)))
    return np.sqrt(condition_number(cov))


class ImuCamScenario:
    """IMU-camera calibration benchmark."""

    name = "imu-cam"
    state_names = ("theta", "p", "v", "b_g", "b_a", "p_C", "alpha")

    def __init__(self, params=None):
        self.params = params or ImuCamParams()

    @property
    def sigma0(self):
        return self.params.sigma0

    def simulate(self, seed):
        return imu_cam_truth(self.params, seed)

    def policy(self, weights=None):
        if isinstance(weights, str) and weights.split(":")[0] in ("dnl", "dc"):
            raise ConfigError("dynamic weights are not available for the imu-cam scenario")
        return as_policy(weights, 21, self.params.sigma0, self.params.beta)

    def run(self, truth, variant, weights=None, seed=0, log_condition=True, mode="batch",
            keep_covariance=False):
        """Run the (PU-)MEKF over one simulated stream.

        ``ekf`` is the full-update MEKF and ``schmidt`` treats the calibration
        states as consider states; ``pu``/``mekf-pu`` use the full covariance,
        ``sr-pu`` and ``ud-pu`` the factored backends.
        """
        p = self.params
        try:
            kind = MEKF_FORMS[variant]
        except KeyError:
            raise ConfigError(f"variant {variant!r} is not available for imu-cam") from None
        if variant == "ekf":
            w = UpdateWeights(np.ones(21))
        elif variant == "schmidt":
            # calibration states (lever arm, extrinsic attitude) as consider states
            w = UpdateWeights(np.r_[np.ones(15), np.zeros(6)])
        else:
            w = UpdateWeights(self.policy(weights).beta)
        n = 21
        b = RecordBuilder(truth.times, truth.truth, n, seed, variant)
        state = MekfState(LAYOUT, truth.x0.copy(), _initial_cov(truth.P0, kind))
        imu = truth.extras["imu"]
        dt = p.dt
        Qc = np.diag(p.noise_psd) * dt
        Rpx = p.pixel_sigma ** 2
        fxy = p.intrinsics

        def log(k):
            P = state.covariance()
            if covs is not None:
                covs[k] = P
            b.rec.estimate[k] = state.x
            b.rec.error[k] = LAYOUT.difference(truth.truth[k], state.x)
            b.rec.sigma[k] = np.sqrt(np.clip(np.diag(P), 0.0, None))
            if log_condition:
                b.rec.cond_full[k] = condition_number(P)
                b.rec.cond_factor[k] = _factor_condition(state.cov)

        covs = None
        if keep_covariance:
            covs = b.rec.extras["covariance"] = np.full((len(truth.times), n, n), np.nan)
        log(0)
        k = 0
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                for k in range(1, len(truth.times)):
                    gyro, accel = imu[k - 1, :3], imu[k - 1, 3:]
                    x = state.x
                    C = quat_to_dcm(x[0:4])
                    F, G = error_dynamics(C, gyro - x[10:13], accel - x[13:16])
                    Phi = np.eye(21) + F * dt
                    cov = propagate_covariance(state.cov, Phi, G, Qc)
                    state = MekfState(LAYOUT, propagate_nominal(x, gyro, accel, dt), cov)
                    obs = truth.measurements.get(k)
                    if obs is not None:
                        ids, uv = obs
                        if len(ids):
                            h_C, _, _, _ = camera_points(state.x, p.landmarks[ids])
                            ok = h_C[:, 2] > 1e-6
                            ids, uv = ids[ok], uv[ok]
                        if len(ids) == 0:
                            raise NoVisibleFeatures(f"no usable features at step {k}")
                        H, uv_hat = measurement_jacobian(state.x, p.landmarks[ids], fxy)
                        r = (uv - uv_hat).ravel()
                        R = Rpx * np.eye(len(r))
                        accept = True
                        if p.gate_threshold is not None:
                            P = state.covariance()
                            S = H @ P @ H.T + R
                            accept = float(r @ np.linalg.solve(S, r)) <= p.gate_threshold
                        b.rec.gate[k] = float(accept)
                        if accept:
                            state = pu_mekf_update(state, H, R, r, w, mode)
                            b.rec.beta[k] = w.beta
                    log(k)
        except (EstimationError, FloatingPointError, np.linalg.LinAlgError) as exc:
            b.fail(k, exc)
            for a in (b.rec.estimate, b.rec.error, b.rec.sigma):
                a[k:] = np.nan
        return b.rec
