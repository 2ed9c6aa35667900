"""Run records and the generic filter loop for additive-state scenarios."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamic_weights import ProcessTermTracker, WeightPolicy, select_weights
from .errors import ConfigError, EstimationError
from .factorizations import condition_number
from .filter_core import UpdateWeights, chi2_gate, kalman_gain
from .forms import make_form

#: filter variant -> covariance representation, for additive-state scenarios
ADDITIVE_FORMS = {"ekf": "full", "schmidt": "full", "pu": "full", "sr-pu": "sqrt", "ud-pu": "ud"}

VARIANTS = ("ekf", "schmidt", "pu", "sr-pu", "ud-pu", "mekf-pu")


@dataclass
class RunRecord:
    """Time series logged by one filter run.

    ``truth`` and ``estimate`` are in state coordinates; ``error`` and
    ``sigma`` are in error-state coordinates (identical for additive
    scenarios). ``beta`` is NaN at steps without a measurement update and
    ``gate`` is 1 (accepted), 0 (rejected) or NaN (no measurement).
    Rows after a filter failure are NaN.
    """

    times: np.ndarray
    truth: np.ndarray
    estimate: np.ndarray
    error: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    cond_full: np.ndarray
    cond_factor: np.ndarray
    gate: np.ndarray
    seed: int
    variant: str
    failure: Optional[str] = None
    failure_step: Optional[int] = None
    extras: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return len(self.times)


class RecordBuilder:
    """Preallocated arrays filled step by step."""

    def __init__(self, times, truth, n_err, seed, variant, n_state=None):
        K = len(times)
        n_state = truth.shape[1] if n_state is None else n_state
        nan = np.nan
        self.rec = RunRecord(
            times=np.asarray(times, dtype=float),
            truth=np.asarray(truth, dtype=float),
            estimate=np.full((K, n_state), nan),
            error=np.full((K, n_err), nan),
            sigma=np.full((K, n_err), nan),
            beta=np.full((K, n_err), nan),
            cond_full=np.full(K, nan),
            cond_factor=np.full(K, nan),
            gate=np.full(K, nan),
            seed=int(seed),
            variant=variant,
        )

    def log(self, k, estimate, error, cov, form=None, log_condition=True):
        r = self.rec
        r.estimate[k] = estimate
        r.error[k] = error
        r.sigma[k] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        if log_condition:
            r.cond_full[k] = condition_number(cov)
            r.cond_factor[k] = form.factor_condition() if form is not None else np.sqrt(r.cond_full[k])

    def fail(self, k, exc):
        self.rec.failure = f"{type(exc).__name__}: {exc}"
        self.rec.failure_step = int(k)


def resolve_policy(variant, policy, n, consider_mask=None, default_beta=None):
    """Weight policy actually used by ``variant``.

    ``ekf`` forces full updates and ``schmidt`` uses 1 on core states and 0 on
    consider states; the partial-update variants use ``policy`` or a static
    policy with ``default_beta``.
    """
    if variant == "ekf":
        return WeightPolicy("static", np.ones(n))
    if variant == "schmidt":
        if consider_mask is None:
            raise ConfigError("the schmidt variant needs consider states")
        return WeightPolicy("static", np.where(np.asarray(consider_mask, bool), 0.0, 1.0))
    if policy is None:
        return WeightPolicy("static", default_beta)
    return policy


def additive_loop(sys, run, variant, policy, seed, gate_threshold=None, log_condition=True,
                  consider_mask=None, default_beta=None, form_options=None, keep_covariance=False):
    """Propagate/update loop over a ``TruthRun`` for additive-state models.

    Filter failures are recorded on the returned record rather than raised.
    With ``keep_covariance`` the full covariance at every step is stored in
    ``extras["covariance"]``.

    Returns
    -------
    RunRecord
    """
    try:
        kind = ADDITIVE_FORMS[variant]
    except KeyError:
        raise ConfigError(f"variant {variant!r} is not available for {sys.name}") from None
    n = len(run.x0)
    policy = resolve_policy(variant, policy, n, consider_mask, default_beta)
    builder = RecordBuilder(run.times, run.truth, n, seed, variant)
    covs = np.full((len(run.times), n, n), np.nan) if keep_covariance else None
    if covs is not None:
        builder.rec.extras["covariance"] = covs
    form = make_form(kind, run.x0, run.P0, **(form_options or {}))
    tracker = ProcessTermTracker(n) if policy.mode == "dnl" else None
    builder.log(0, form.mean, form.mean - run.truth[0], form.covariance(), form, log_condition)
    if covs is not None:
        covs[0] = form.covariance()
    k = 0
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            for k in range(1, len(run.times)):
                if tracker is not None:
                    tracker.step(sys, form.mean, form.covariance(), None, k - 1)
                form.propagate(sys, None, k - 1)
                y = run.measurements.get(k)
                if y is not None:
                    x_m, P_m = form.mean, form.covariance()
                    accept = True
                    if gate_threshold is not None:
                        _, S = kalman_gain(P_m, sys.H(x_m, k), sys.R)
                        accept = chi2_gate(np.atleast_1d(y) - sys.h(x_m, k), S, gate_threshold)
                    builder.rec.gate[k] = float(accept)
                    if accept:
                        pv = tracker.value if tracker is not None else None
                        w = select_weights(policy, sys, x_m, P_m, y, k, pv)
                        builder.rec.beta[k] = w.beta
                        form.update(sys, y, w, k)
                    if tracker is not None:
                        tracker.reset()
                P = form.covariance()
                builder.log(k, form.mean, form.mean - run.truth[k], P, form, log_condition)
                if covs is not None:
                    covs[k] = P
    except (EstimationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        builder.fail(k, exc)
        r = builder.rec
        for a in (r.estimate, r.error, r.sigma):
            a[k:] = np.nan
    return builder.rec


def as_policy(weights, n, sigma0=None, default_beta=None, dynamic_mask=None):
    """Build a ``WeightPolicy`` from a CLI-style specification.

    Accepts ``None``, a number or sequence of numbers, ``"dnl"``, ``"dc"``,
    ``"dnl:base=0.9,0.9,0.75"`` (comma list or scalar), or an existing policy.
    """
    if isinstance(weights, WeightPolicy):
        return weights
    if weights is None:
        return WeightPolicy("static", default_beta, sigma0)
    if isinstance(weights, UpdateWeights):
        return WeightPolicy("static", weights.beta, sigma0)
    if isinstance(weights, str):
        text = weights.strip()
        mode, _, rest = text.partition(":")
        if mode in ("dnl", "dc"):
            base = None
            if rest:
                key, _, val = rest.partition("=")
                if key.strip() != "base":
                    raise ConfigError(f"bad weight option {rest!r}")
                base = _beta_list(val, n)
            return WeightPolicy(mode, base, sigma0, dynamic_mask)
        return WeightPolicy("static", _beta_list(text, n), sigma0)
    return WeightPolicy("static", np.broadcast_to(np.asarray(weights, float), (n,)).copy(), sigma0)


def _beta_list(text, n):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse weights {text!r}") from None
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise ConfigError(f"expected {n} weights, got {len(vals)}")
    b = np.array(vals)
    if np.any(b < 0) or np.any(b > 1):
        raise ConfigError(f"weights must lie in [0, 1], got {vals}")
    return b
