"""Experiment driver: single runs, Monte Carlo campaigns and reports."""
import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidRunCount
from .scenarios import SCENARIOS, make_scenario

DIVERGENCE_FACTOR = 10.0
DIVERGENCE_EPOCHS = 10


def _fmt(v):
    return f"{v:.17g}"


def run_scenario(scenario, variant, weights=None, seed=0, **run_options):
    """Simulate one seeded stream and filter it.

    ``scenario`` is a scenario instance or a registered name.

    Returns
    -------
    RunRecord
    """
    if isinstance(scenario, str):
        scenario = make_scenario(scenario)
    truth = scenario.simulate(seed)
    return scenario.run(truth, variant, weights, seed, **run_options)


def divergence_detect(record, sigma0, factor=DIVERGENCE_FACTOR, epochs=DIVERGENCE_EPOCHS):
    """Flag a run whose error blows up.

    A run diverges if the filter failed, if an error becomes non-finite after
    the first logged epoch, or if some ``|err_i| > factor * 3 sigma0_i`` for
    ``epochs`` consecutive epochs.

    Returns
    -------
    diverged : bool
    time : float or None
        Time of the first divergent epoch.
    """
    err = np.asarray(record.error, dtype=float)
    finite_rows = np.all(np.isfinite(err), axis=1)
    started = np.flatnonzero(finite_rows)
    if len(started) == 0:
        return True, float(record.times[0])
    k0 = started[0]
    bad = np.flatnonzero(~finite_rows[k0:])
    first_nan = k0 + bad[0] if len(bad) else None
    if record.failure is not None and record.failure_step is not None:
        first_nan = record.failure_step if first_nan is None else min(first_nan, record.failure_step)
    limit = factor * 3.0 * np.asarray(sigma0, dtype=float)
    with np.errstate(invalid="ignore"):
        over = np.any(np.abs(err) > limit, axis=1)
    run = 0
    first_over = None
    for k in range(k0, len(over)):
        run = run + 1 if over[k] else 0
        if run >= epochs:
            first_over = k - epochs + 1
            break
    hits = [k for k in (first_nan, first_over) if k is not None]
    if not hits:
        return False, None
    return True, float(record.times[min(hits)])


@dataclass
class MonteCarloReport:
    """Per-step statistics over a set of runs.

    Moments are accumulated per element over finite errors only (Welford
    form, merged with Chan's pairwise update), so partial reports combine
    exactly with ``merge``.
    """

    times: np.ndarray
    count: np.ndarray
    mean_err: np.ndarray
    m2: np.ndarray
    sigma_sum: np.ndarray
    sigma_count: np.ndarray
    n_runs: int
    divergence_count: int
    base_seed: int
    diverged_seeds: list = field(default_factory=list)

    @classmethod
    def from_record(cls, record, sigma0, base_seed=None):
        e = np.asarray(record.error, dtype=float)
        ok = np.isfinite(e)
        s = np.asarray(record.sigma, dtype=float)
        sok = np.isfinite(s)
        div, _ = divergence_detect(record, sigma0)
        return cls(
            times=np.asarray(record.times, dtype=float),
            count=ok.astype(float),
            mean_err=np.where(ok, e, 0.0),
            m2=np.zeros_like(e),
            sigma_sum=np.where(sok, s, 0.0),
            sigma_count=sok.astype(float),
            n_runs=1,
            divergence_count=int(div),
            base_seed=record.seed if base_seed is None else base_seed,
            diverged_seeds=[record.seed] if div else [],
        )

    def merge(self, other):
        """Combine two disjoint reports."""
        na, nb = self.count, other.count
        n = na + nb
        with np.errstate(invalid="ignore", divide="ignore"):
            delta = other.mean_err - self.mean_err
            frac = np.where(n > 0, nb / np.where(n > 0, n, 1.0), 0.0)
            mean = self.mean_err + delta * frac
            m2 = self.m2 + other.m2 + delta ** 2 * np.where(n > 0, na * nb / np.where(n > 0, n, 1.0), 0.0)
        return MonteCarloReport(
            times=self.times, count=n, mean_err=mean, m2=m2,
            sigma_sum=self.sigma_sum + other.sigma_sum,
            sigma_count=self.sigma_count + other.sigma_count,
            n_runs=self.n_runs + other.n_runs,
            divergence_count=self.divergence_count + other.divergence_count,
            base_seed=min(self.base_seed, other.base_seed),
            diverged_seeds=sorted(self.diverged_seeds + other.diverged_seeds),
        )

    @property
    def sampled_sigma(self):
        """Sample deviation of the error with ``n - 1`` normalization."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.count > 1, np.sqrt(self.m2 / np.maximum(self.count - 1, 1)), np.nan)

    @property
    def filter_sigma(self):
        """Mean filter-reported deviation."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.sigma_count > 0, self.sigma_sum / np.maximum(self.sigma_count, 1), np.nan)

    @property
    def mean_error(self):
        return np.where(self.count > 0, self.mean_err, np.nan)


def _run_one(args):
    name, params, variant, weights, seed, run_options, keep = args
    scenario = SCENARIOS[name][0](params)
    rec = run_scenario(scenario, variant, weights, seed, **run_options)
    report = MonteCarloReport.from_record(rec, scenario.sigma0)
    return report, (rec if keep else None)


def monte_carlo(scenario, variant, weights=None, n_runs=100, base_seed=0, jobs=1,
                keep_records=False, **run_options):
    """Run ``n_runs`` seeded runs (seed ``base_seed + i``) and aggregate.

    Aggregation is a left fold in seed order, so the report does not depend
    on ``jobs``.

    Returns
    -------
    report : MonteCarloReport
    records : list of RunRecord
        Empty unless ``keep_records``.
    """
    if int(n_runs) != n_runs or n_runs < 1:
        raise InvalidRunCount(f"n_runs must be a positive integer, got {n_runs}")
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    run_options.setdefault("log_condition", False)
    tasks = [(scenario.name, scenario.params, variant, weights, base_seed + i, run_options, keep_records)
             for i in range(int(n_runs))]
    if jobs == 1:
        results = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    report = results[0][0]
    for r, _ in results[1:]:
        report = report.merge(r)
    report.base_seed = base_seed
    records = [rec for _, rec in results if rec is not None]
    return report, records


def consistency_stats(report, fraction=1.0 / 3.0):
    """Per-state consistency summary over the final ``fraction`` of the run.

    Returns
    -------
    dict
        ``ratio``: time average of sampled sigma / mean filter sigma.
        ``z``: time average of ``mean_err / (sampled sigma / sqrt(count))``,
        the standard-error z-score of the mean error.
        ``nmee``: time average of ``mean_err / filter sigma``.
    """
    K = len(report.times)
    if K == 0 or report.n_runs < 1:
        raise ValueError("empty report")
    k0 = int(np.floor(K * (1.0 - fraction)))
    ss = report.sampled_sigma[k0:]
    fs = report.filter_sigma[k0:]
    me = report.mean_error[k0:]
    cnt = report.count[k0:]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.nanmean(ss / fs, axis=0)
        z = np.nanmean(me / (ss / np.sqrt(cnt)), axis=0)
        nmee = np.nanmean(me / fs, axis=0)
    return {"ratio": ratio, "z": z, "nmee": nmee, "start_time": float(report.times[k0])}


def _rel_dev(a, b, scale):
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.abs(a - b) / scale
    return float(np.nanmax(d)) if np.any(np.isfinite(d)) else 0.0


def compare_forms(scenario, weights=None, seed=0, include_ekf=None):
    """Run the full, square-root and UD partial-update forms on one stream.

    State deviations are scaled by ``max(|x|, sigma)`` of the full form and
    covariance deviations by ``sqrt(P_ii P_jj)``. The plain EKF joins the
    comparison when every weight is 1 (or ``include_ekf`` is set).

    Returns
    -------
    dict
        ``state``/``covariance``: max deviation per variant against ``pu``.
    """
    if isinstance(scenario, str):
        scenario = make_scenario(scenario)
    truth = scenario.simulate(seed)
    beta = scenario.policy(weights).beta
    if include_ekf is None:
        include_ekf = beta is not None and np.all(beta == 1.0)
    variants = ["pu", "sr-pu", "ud-pu"] + (["ekf"] if include_ekf else [])
    recs = {v: scenario.run(truth, v, weights, seed, log_condition=False, keep_covariance=True)
            for v in variants}
    ref = recs["pu"]
    Pref = ref.extras["covariance"]
    d = np.sqrt(np.abs(np.einsum("kii->ki", Pref)))
    xscale = np.maximum(np.abs(ref.estimate), 1e-300)
    if ref.estimate.shape == ref.sigma.shape:
        xscale = np.maximum(xscale, ref.sigma)
    pscale = np.maximum(d[:, :, None] * d[:, None, :], 1e-300)
    out = {"state": {}, "covariance": {}, "failures": {v: r.failure for v, r in recs.items()}}
    for v, r in recs.items():
        if v == "pu":
            continue
        out["state"][v] = _rel_dev(r.estimate, ref.estimate, xscale)
        out["covariance"][v] = _rel_dev(r.extras["covariance"], Pref, pscale)
    out["max_state"] = max(out["state"].values())
    out["max_covariance"] = max(out["covariance"].values())
    return out


def record_csv(record, stream=None):
    """Write a single run as CSV (17 significant digits); return the text if no stream."""
    buf = stream if stream is not None else io.StringIO()
    n_s = record.truth.shape[1]
    n_e = record.error.shape[1]
    header = (["time"] + [f"truth_{i}" for i in range(n_s)] + [f"est_{i}" for i in range(n_s)]
              + [f"err_{i}" for i in range(n_e)] + [f"sigma_{i}" for i in range(n_e)]
              + [f"beta_{i}" for i in range(n_e)] + ["cond_full", "cond_factor", "gate"])
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for k in range(record.n_steps):
        row = np.concatenate([
            [record.times[k]], record.truth[k], record.estimate[k], record.error[k], record.sigma[k],
            record.beta[k], [record.cond_full[k], record.cond_factor[k], record.gate[k]],
        ])
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue() if stream is None else None


def report_csv(report, stream=None):
    """Write Monte Carlo per-step statistics as CSV."""
    buf = stream if stream is not None else io.StringIO()
    n = report.mean_err.shape[1]
    header = (["time"] + [f"sampled_sigma_{i}" for i in range(n)] + [f"filter_sigma_{i}" for i in range(n)]
              + [f"mean_err_{i}" for i in range(n)])
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    ss, fs, me = report.sampled_sigma, report.filter_sigma, report.mean_error
    for k in range(len(report.times)):
        row = np.concatenate([[report.times[k]], ss[k], fs[k], me[k]])
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue() if stream is None else None


def truth_csv(truth, stream=None):
    """Export a truth trajectory as CSV with ``time`` first."""
    buf = stream if stream is not None else io.StringIO()
    X = np.asarray(truth.truth)
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["time"] + [f"truth_{i}" for i in range(X.shape[1])])
    for t, row in zip(truth.times, X):
        w.writerow([_fmt(t)] + [_fmt(v) for v in row])
    return buf.getvalue() if stream is None else None
