"""Vertically falling body tracked by a ground range sensor.

State ``x = [altitude (m), vertical velocity (m/s), ballistic parameter (1/m)]``.
The discrete dynamics are::

    x1+ = x1 + x2 dt
    x2+ = x2 + (exp(-x1 / k_p) x2^2 x3 - g) dt
    x3+ = x3

and the sensor, at height ``h0`` and horizontal offset ``d``, measures the
range ``sqrt(d^2 + (x1 - h0)^2)`` with additive Gaussian noise.
"""
from dataclasses import dataclass, field

import numpy as np

from ..filter_core import NonlinearSystem
from ..rng import streams
from ..runner import additive_loop, as_policy
from .base import TruthRun, initial_offsets


@dataclass
class FallingBodyParams:
    """Falling-body configuration.

    ``R`` is a range variance (m^2). ``initial_truth`` and ``meas_period``
    are simulation choices, not reference constants: the default places the
    body at about 91 km, falling at about 6.1 km/s, so it crosses the sensor
    altitude near t = 10 s, and ranges arrive at 2 Hz.

    ``dynamic_mask`` marks the states whose weights are chosen online by
    the DNL/DC policies (the ballistic parameter only).
    """

    k_p: float = 6100.0
    g: float = 9.81
    d: float = 30000.0
    h0: float = 30000.0
    dt: float = 0.1
    meas_period: float = 0.5
    duration: float = 30.0
    sigma0: np.ndarray = field(default_factory=lambda: np.array([300.0, 600.0, 0.33]))
    R: float = 300.0
    initial_truth: np.ndarray = field(default_factory=lambda: np.array([91440.0, -6096.0, 0.01]))
    draw_multiple: float = 1.0
    draw_mode: str = "sign"
    beta: np.ndarray = field(default_factory=lambda: np.array([0.9, 0.9, 0.75]))
    consider_mask: np.ndarray = field(default_factory=lambda: np.array([False, False, True]))
    dynamic_mask: np.ndarray = field(default_factory=lambda: np.array([False, False, True]))

    def __post_init__(self):
        self.sigma0 = np.asarray(self.sigma0, dtype=float)
        self.initial_truth = np.asarray(self.initial_truth, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.consider_mask = np.asarray(self.consider_mask, dtype=bool)
        self.dynamic_mask = np.asarray(self.dynamic_mask, dtype=bool)
        for name in ("k_p", "g", "d", "h0", "dt", "meas_period", "duration", "R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.sigma0 <= 0):
            raise ValueError("sigma0 must be positive")

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    @property
    def meas_stride(self):
        return int(round(self.meas_period / self.dt))


def falling_body_model(params=None):
    """Model bundle with analytic Jacobians and Hessians."""
    p = params or FallingBodyParams()
    kp, g, d, h0, dt = p.k_p, p.g, p.d, p.h0, p.dt

    def f(x, u=None, k=0):
        e = np.exp(-x[0] / kp)
        return np.array([x[0] + x[1] * dt, x[1] + (e * x[1] ** 2 * x[2] - g) * dt, x[2]])

    def F(x, u=None, k=0):
        e = np.exp(-x[0] / kp)
        x1, x2, x3 = x
        return np.array([
            [1.0, dt, 0.0],
            [-e * x2 ** 2 * x3 / kp * dt, 1.0 + 2.0 * e * x2 * x3 * dt, e * x2 ** 2 * dt],
            [0.0, 0.0, 1.0],
        ])

    def f_hessians(x, u=None, k=0):
        e = np.exp(-x[0] / kp)
        x1, x2, x3 = x
        H2 = dt * np.array([
            [e * x2 ** 2 * x3 / kp ** 2, -2.0 * e * x2 * x3 / kp, -e * x2 ** 2 / kp],
            [-2.0 * e * x2 * x3 / kp, 2.0 * e * x3, 2.0 * e * x2],
            [-e * x2 ** 2 / kp, 2.0 * e * x2, 0.0],
        ])
        out = np.zeros((3, 3, 3))
        out[1] = H2
        return out

    def h(x, k=0):
        return np.array([np.hypot(d, x[0] - h0)])

    def H(x, k=0):
        return np.array([[(x[0] - h0) / np.hypot(d, x[0] - h0), 0.0, 0.0]])

    def h_hessians(x, k=0):
        r = np.hypot(d, x[0] - h0)
        out = np.zeros((1, 3, 3))
        out[0, 0, 0] = d ** 2 / r ** 3
        return out

    return NonlinearSystem(
        f=f, h=h, F=F, H=H, G=np.eye(3), Q=np.zeros((3, 3)), R=np.array([[p.R]]),
        f_hessians=f_hessians, h_hessians=h_hessians, name="falling-body",
    )


def falling_body_truth(params=None, seed=0, draw_multiple=None, draw_mode=None):
    """Simulate truth, range measurements and the initial estimate.

    Measurements are taken every ``meas_period`` seconds starting at
    ``t = meas_period``.

    Returns
    -------
    TruthRun
    """
    p = params or FallingBodyParams()
    rng = streams(seed)
    sys = falling_body_model(p)
    K = p.n_steps
    X = np.empty((K + 1, 3))
    X[0] = p.initial_truth
    for k in range(K):
        X[k + 1] = sys.f(X[k], None, k)
    meas = {}
    sr = np.sqrt(p.R)
    for k in range(p.meas_stride, K + 1, p.meas_stride):
        meas[k] = sys.h(X[k]) + sr * rng["measurement"].standard_normal(1)
    mult = p.draw_multiple if draw_multiple is None else draw_multiple
    mode = p.draw_mode if draw_mode is None else draw_mode
    x0 = X[0] + initial_offsets(rng["init"], p.sigma0, mult, mode)
    P0 = np.diag(p.sigma0 ** 2)
    return TruthRun(np.arange(K + 1) * p.dt, X, meas, x0, P0)


class FallingBodyScenario:
    """Falling-body benchmark bound to a parameter set."""

    name = "falling-body"
    state_names = ("altitude", "velocity", "ballistic")

    def __init__(self, params=None):
        self.params = params or FallingBodyParams()
        self.system = falling_body_model(self.params)

    @property
    def sigma0(self):
        return self.params.sigma0

    def simulate(self, seed, draw_multiple=None, draw_mode=None):
        return falling_body_truth(self.params, seed, draw_multiple, draw_mode)

    def policy(self, weights=None):
        p = self.params
        return as_policy(weights, 3, p.sigma0, p.beta, p.dynamic_mask)

    def run(self, truth, variant, weights=None, seed=0, log_condition=True, keep_covariance=False,
            **form_options):
        """Filter one simulated stream; see ``additive_loop``."""
        p = self.params
        return additive_loop(
            self.system, truth, variant, self.policy(weights), seed,
            log_condition=log_condition, consider_mask=p.consider_mask,
            default_beta=p.beta, form_options=form_options or None,
            keep_covariance=keep_covariance,
        )
