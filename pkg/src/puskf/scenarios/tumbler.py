"""Angular-rate estimation of a tumbling body from tracked body vectors.

State ``[p_1, ..., p_N, omega]`` (3N + 3): body vectors of N tracked features
measured from a body-fixed origin and resolved in the camera frame, plus the
body angular rate. The filter uses the first-order rotation model

    p_i+ = (I + [omega x] dt) p_i,    omega+ = omega,

and observes the body vectors directly, ``y = [I_3N 0] x + v``. The truth
rotates the cloud exactly with the matrix exponential.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ..errors import ConfigError, DegenerateCloud, EstimationError
from ..factorizations import cholesky_lower, condition_number, udu_decompose
from ..filter_core import CHI2_099, GaussianBelief, NonlinearSystem, SqrtFactor, UpdateWeights
from ..mekf import error_state_update, propagate_covariance, skew
from ..rng import streams
from ..runner import RecordBuilder
from .base import TruthRun

TUMBLER_FORMS = {"ekf": "full", "pu": "full", "sr-pu": "sqrt", "ud-pu": "ud"}


@dataclass
class TumblerParams:
    """Tumbling-body simulation settings.

    ``R_F`` is the per-axis body-vector measurement variance used by the
    filter; ``noise_sigma`` is the standard deviation of the simulated noise.
    Feature and reinitialization thresholds are simulation choices.
    """

    N: int = 12
    omega_true: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.035, 0.0]))
    frame_rate: float = 30.0
    R_F: float = 0.005
    noise_sigma: float = 0.005
    duration: float = 45.0
    coarse_window: float = 3.0
    cloud_radius: float = 0.2
    pool_size: int = 400
    visibility_cos: float = 0.2
    reinit_threshold: int = 6
    reinit_every: int = 0
    drop_factor: float = 10.0
    feature_var0: float = None
    beta_features: float = 1.0
    beta_rates: float = 0.05
    gate_threshold: float = CHI2_099[3]

    def __post_init__(self):
        self.omega_true = np.asarray(self.omega_true, dtype=float)
        if self.N < 3:
            raise ValueError("N must be at least 3")
        for name in ("frame_rate", "R_F", "duration", "coarse_window", "cloud_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 3 <= self.reinit_threshold <= self.N:
            raise ValueError("reinit_threshold must lie in [3, N]")

    @property
    def feature_variance(self):
        """Initial per-axis feature variance (defaults to ``R_F``)."""
        return self.R_F if self.feature_var0 is None else self.feature_var0

    @property
    def dt(self):
        return 1.0 / self.frame_rate

    @property
    def n_steps(self):
        return int(round(self.duration * self.frame_rate))

    @property
    def coarse_steps(self):
        return int(round(self.coarse_window * self.frame_rate))

    @property
    def beta(self):
        return np.concatenate([np.full(3 * self.N, self.beta_features), np.full(3, self.beta_rates)])


def tumbler_model(N, dt=1.0 / 30.0, R=0.005):
    """First-order tumbling model with direct body-vector measurements.

    Examples
    --------
    >>> sys = tumbler_model(1, dt=0.1)
    >>> sys.f(np.array([1.0, 0, 0, 0, 0, 1.0]))[:3]
    array([1. , 0.1, 0. ])
    """
    if N < 1:
        raise ValueError("N must be positive")
    n = 3 * N + 3

    def f(x, u=None, k=0):
        w = x[-3:]
        P = x[:-3].reshape(N, 3)
        return np.concatenate([(P + dt * np.cross(w, P)).ravel(), w])

    def F(x, u=None, k=0):
        w = x[-3:]
        P = x[:-3].reshape(N, 3)
        out = np.eye(n)
        A = np.eye(3) + skew(w) * dt
        for i in range(N):
            s = slice(3 * i, 3 * i + 3)
            out[s, s] = A
            out[s, -3:] = -skew(P[i]) * dt
        return out

    def f_hessians(x, u=None, k=0):
        # d^2 (w x p)_a / dp_b dw_c = -eps_abc, bilinear so constant
        eps = np.zeros((3, 3, 3))
        eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
        eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
        out = np.zeros((n, n, n))
        for i in range(N):
            s = slice(3 * i, 3 * i + 3)
            for a in range(3):
                blk = -eps[a] * dt
                out[3 * i + a, s, -3:] = blk
                out[3 * i + a, -3:, s] = blk.T
        return out

    H = np.hstack([np.eye(3 * N), np.zeros((3 * N, 3))])

    return NonlinearSystem(
        f=f, h=lambda x, k=0: H @ x, F=F, H=lambda x, k=0: H, G=np.eye(n), Q=np.zeros((n, n)),
        R=R * np.eye(3 * N), f_hessians=f_hessians,
        h_hessians=lambda x, k=0: np.zeros((3 * N, n, n)), name="tumbler",
    )


def svd_rigid_align(P_cloud, Q_cloud):
    """Proper rotation and translation minimizing ``sum |R p_i + t - q_i|^2``.

    Raises
    ------
    DegenerateCloud
        Fewer than three points, or a collinear cloud.
    """
    P = np.asarray(P_cloud, dtype=float)
    Q = np.asarray(Q_cloud, dtype=float)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[1] != 3:
        raise ValueError("clouds must both be N x 3")
    if len(P) < 3:
        raise DegenerateCloud("need at least three points")
    pc, qc = P.mean(0), Q.mean(0)
    X, Y = P - pc, Q - qc
    sx = np.linalg.svd(X, compute_uv=False)
    if sx[1] <= 1e-9 * max(sx[0], 1e-300):
        raise DegenerateCloud("cloud is collinear or coincident")
    U, _, Vt = np.linalg.svd(X.T @ Y)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, qc - R @ pc


def euler321_increments(R):
    """Roll, pitch, yaw of ``R = Rz(yaw) Ry(pitch) Rx(roll)``."""
    return np.array([
        np.arctan2(R[2, 1], R[2, 2]),
        -np.arcsin(np.clip(R[2, 0], -1.0, 1.0)),
        np.arctan2(R[1, 0], R[0, 0]),
    ])


def coarse_rate_init(frames, dt):
    """Rate mean and sample deviation from consecutive cloud alignments.

    Parameters
    ----------
    frames : sequence of ndarray, shape (N, 3)
        Corresponding body vectors at consecutive frames.
    dt : float
        Frame interval.

    Returns
    -------
    omega0, sigma0 : ndarray, shape (3,)
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    rates = np.array([
        euler321_increments(svd_rigid_align(a, b)[0]) / dt for a, b in zip(frames[:-1], frames[1:])
    ])
    sigma = rates.std(axis=0, ddof=1) if len(rates) > 1 else np.zeros(3)
    return rates.mean(axis=0), sigma


def tumbler_reinit(belief, features, feature_var):
    """Replace the feature blocks, keeping the rate estimate and its covariance.

    Cross-covariances are discarded and every new feature gets
    ``feature_var * I``. The covariance representation is preserved.
    """
    feats = np.asarray(features, dtype=float).reshape(-1, 3)
    P = belief.covariance()
    Pw = P[-3:, -3:]
    n = 3 * len(feats) + 3
    P_new = np.zeros((n, n))
    P_new[:-3, :-3] = feature_var * np.eye(n - 3)
    P_new[-3:, -3:] = Pw
    x_new = np.concatenate([feats.ravel(), belief.mean[-3:]])
    return GaussianBelief(x_new, _as_form(P_new, belief.form))


def _as_form(P, kind):
    if kind == "sqrt":
        return SqrtFactor(cholesky_lower(P))
    if kind == "ud":
        return udu_decompose(P)
    return P


def _sphere_pool(rng, m, radius):
    v = rng.standard_normal((m, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v * (1.0 + 0.1 * rng.uniform(-1.0, 1.0, (m, 1)))


def tumbler_truth(params=None, seed=0):
    """Simulate tracked body vectors over segments between reinitializations.

    The camera looks along +z at the body centre; a pool point is visible
    while its outward direction faces the camera. A segment starts with the
    N visible pool points nearest the view axis, and a new segment begins
    when fewer than ``reinit_threshold`` remain visible or after
    ``reinit_every`` frames.

    Returns
    -------
    TruthRun
        ``truth`` rows are ``[p_1..p_N, omega]`` for the segment active at
        each frame, ``measurements`` maps frame -> ``(visible mask, y)`` with
        ``y`` of shape (N, 3). ``extras`` holds ``reinit_steps`` and the
        coarse-initialization frames.
    """
    p = params or TumblerParams()
    rng = streams(seed)
    K, N, dt = p.n_steps, p.N, p.dt
    pool = _sphere_pool(rng["aux"], p.pool_size, p.cloud_radius)
    step = expm(skew(p.omega_true) * dt)
    X = np.zeros((K + 1, 3 * N + 3))
    meas, reinit = {}, []
    R_k = np.eye(3)
    ids, seg_start = None, 0
    noise = rng["measurement"]
    for k in range(K + 1):
        world = pool @ R_k.T
        facing = -world[:, 2] / np.linalg.norm(world, axis=1)
        vis = facing > p.visibility_cos
        need = ids is None or np.count_nonzero(vis[ids]) < p.reinit_threshold
        forced = p.reinit_every and k - seg_start >= p.reinit_every
        if need or forced:
            cand = np.flatnonzero(vis)
            if len(cand) < N:
                raise DegenerateCloud(f"only {len(cand)} pool points visible at frame {k}")
            ids = cand[np.argsort(-facing[cand])[:N]]
            origin = world[ids].mean(0)
            origin_body = R_k.T @ origin
            seg_start = k
            if k > 0:
                reinit.append(k)
        bv = world[ids] - R_k @ origin_body
        X[k, :3 * N] = bv.ravel()
        X[k, 3 * N:] = p.omega_true
        y = bv + p.noise_sigma * noise.standard_normal((N, 3))
        meas[k] = (vis[ids].copy(), y)
        R_k = step @ R_k
    kc = p.coarse_steps
    if any(0 < r <= kc for r in reinit):
        raise ConfigError("the coarse-initialization window spans a reinitialization")
    frames = [meas[k][1] for k in range(kc + 1)]
    return TruthRun(
        times=np.arange(K + 1) * dt, truth=X, measurements=meas, x0=None, P0=None,
        extras={"reinit_steps": reinit, "coarse_frames": frames, "start_step": kc},
    )


class TumblerScenario:
    """Tumbling-body rate-estimation benchmark."""

    name = "tumbler"

    def __init__(self, params=None):
        self.params = params or TumblerParams()
        p = self.params
        self.system = tumbler_model(p.N, p.dt, p.R_F)

    @property
    def state_names(self):
        return tuple(f"p{i}" for i in range(self.params.N)) + ("omega",)

    @property
    def sigma0(self):
        """Reference deviations for divergence checks (0.05 rad/s on rates)."""
        p = self.params
        return np.concatenate([np.full(3 * p.N, np.sqrt(p.feature_variance)), np.full(3, 0.05)])

    def simulate(self, seed):
        return tumbler_truth(self.params, seed)

    def policy(self, weights=None):
        from ..runner import as_policy

        if isinstance(weights, str) and weights.split(":")[0] in ("dnl", "dc"):
            raise ConfigError("dynamic weights are not available for the tumbler scenario")
        return as_policy(weights, 3 * self.params.N + 3, None, self.params.beta)

    def run(self, truth, variant, weights=None, seed=0, log_condition=True, keep_covariance=False):
        """Coarse-initialize over the first window, then filter to the end.

        Rows before the filter starts are NaN. At a reinitialization frame
        the new features are taken from that frame's measurement.
        """
        p = self.params
        try:
            kind = TUMBLER_FORMS[variant]
        except KeyError:
            raise ConfigError(f"variant {variant!r} is not available for the tumbler") from None
        n = 3 * p.N + 3
        w = UpdateWeights(np.ones(n)) if variant == "ekf" else UpdateWeights(self.policy(weights).beta)
        sys = self.system
        b = RecordBuilder(truth.times, truth.truth, n, seed, variant)
        k0 = truth.extras["start_step"]
        omega0, sig0 = coarse_rate_init(truth.extras["coarse_frames"], p.dt)
        sig0 = np.maximum(sig0, 1e-6)
        P0 = np.diag(np.concatenate([np.full(3 * p.N, p.feature_variance), sig0 ** 2]))
        x0 = np.concatenate([truth.measurements[k0][1].ravel(), omega0])
        belief = GaussianBelief(x0, _as_form(P0, kind))
        var0 = p.feature_variance
        reinits = set(truth.extras["reinit_steps"])
        Rdiag = p.R_F
        G, Q = sys.G, sys.Q

        def log(k):
            P = belief.covariance()
            if covs is not None:
                covs[k] = P
            b.rec.estimate[k] = belief.mean
            b.rec.error[k] = belief.mean - truth.truth[k]
            b.rec.sigma[k] = np.sqrt(np.clip(np.diag(P), 0.0, None))
            if log_condition:
                b.rec.cond_full[k] = condition_number(P)
                b.rec.cond_factor[k] = _factor_condition(belief.cov)

        covs = None
        if keep_covariance:
            covs = b.rec.extras["covariance"] = np.full((len(truth.times), n, n), np.nan)
        log(k0)
        k = k0
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                for k in range(k0 + 1, len(truth.times)):
                    x = belief.mean
                    cov = propagate_covariance(belief.cov, sys.F(x), G, Q)
                    belief = GaussianBelief(sys.f(x), cov)
                    vis, y = truth.measurements[k]
                    if k in reinits:
                        belief = tumbler_reinit(belief, y, var0)
                    else:
                        belief = self._update(belief, vis, y, w, Rdiag, var0, b, k)
                    log(k)
        except (EstimationError, FloatingPointError, np.linalg.LinAlgError) as exc:
            b.fail(k, exc)
            for a in (b.rec.estimate, b.rec.error, b.rec.sigma):
                a[k:] = np.nan
        return b.rec

    def _update(self, belief, vis, y, w, Rdiag, var0, b, k):
        p = self.params
        sig2 = np.diag(belief.covariance())[:-3].reshape(p.N, 3)
        use = vis & np.all(sig2 <= p.drop_factor * var0, axis=1)
        x = belief.mean
        if p.gate_threshold is not None:
            P = belief.covariance()
            for i in np.flatnonzero(use):
                s = slice(3 * i, 3 * i + 3)
                r = y[i] - x[s]
                S = P[s, s] + Rdiag * np.eye(3)
                if float(r @ np.linalg.solve(S, r)) > p.gate_threshold:
                    use[i] = False
            b.rec.gate[k] = float(use.sum()) / max(int(vis.sum()), 1)
        if not use.any():
            return belief
        rows = (3 * np.flatnonzero(use)[:, None] + np.arange(3)).ravel()
        H = np.zeros((len(rows), len(x)))
        H[np.arange(len(rows)), rows] = 1.0
        r = y.ravel()[rows] - x[rows]
        b.rec.beta[k] = w.beta
        return error_state_update(belief, H, Rdiag * np.eye(len(rows)), r, w)


def _factor_condition(cov):
    if isinstance(cov, SqrtFactor):
        return condition_number(cov.S)
    if hasattr(cov, "U"):
        return condition_number(cov.U * np.sqrt(np.clip(cov.D, 0.0, None)))
    return np.sqrt(condition_number(cov))

