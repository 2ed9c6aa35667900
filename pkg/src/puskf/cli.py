"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 filter failure.
"""
import argparse
import sys
from fractions import Fraction

from .errors import ConfigError, EstimationError
from .flops import flops_report
from .harness import compare_forms, consistency_stats, monte_carlo, record_csv, report_csv, run_scenario
from .runner import VARIANTS
from .scenarios import SCENARIOS, export_config, load_config, make_scenario, scenario_params, section_name

EXIT_OK, EXIT_CONFIG, EXIT_FILTER = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p, filt=True):
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="falling-body")
    if filt:
        p.add_argument("--filter", choices=VARIANTS, default="pu", dest="variant")
        p.add_argument("--weights", default=None,
                       help="comma list, 'dnl', 'dc' or 'dnl:base=<list>' (default: scenario weights)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--config", default=None, help="key = value scenario config file")


def build_parser():
    parser = _Parser(prog="puskf", description="Partial-update Kalman filter experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="single run, per-step CSV"))
    mc = sub.add_parser("monte-carlo", help="Monte Carlo campaign, per-step statistics CSV")
    _common(mc)
    mc.add_argument("--runs", type=int, default=100)
    mc.add_argument("--jobs", type=int, default=1)
    cmp_ = sub.add_parser("compare", help="full vs square-root vs UD partial update")
    _common(cmp_)
    fl = sub.add_parser("flops", help="flop-count tables as CSV")
    fl.add_argument("--n", default="1-20", help="state counts, e.g. 1-20 or 3,5")
    fl.add_argument("--m", default="1-20", help="measurement counts")
    fl.add_argument("--q", default="1", help="process-noise input counts")
    fl.add_argument("--out", default=None)
    ex = sub.add_parser("export-config", help="write the effective scenario config")
    _common(ex, filt=False)
    return parser


def _int_range(text):
    vals = []
    try:
        for part in text.split(","):
            a, dash, b = part.strip().partition("-")
            vals.extend(range(int(a), int(b) + 1) if dash else [int(a)])
    except ValueError:
        raise ConfigError(f"bad integer range {text!r}") from None
    if not vals or min(vals) < 1:
        raise ConfigError(f"range {text!r} must contain positive integers")
    return vals


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _scenario(args):
    config = load_config(args.config) if args.config else None
    return make_scenario(args.scenario, scenario_params(args.scenario, config))


def _flops_csv(ns, ms, qs):
    cols = None
    lines = []
    for n in ns:
        for m in ms:
            for q in qs:
                d = flops_report(n, m, q).as_dict()
                if cols is None:
                    cols = list(d)
                    lines.append(",".join(cols))
                lines.append(",".join(_num(d[c]) for c in cols))
    return "\r\n".join(lines) + "\r\n"


def _num(v):
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{float(v):.17g}"
    return str(v)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "flops":
            _emit(_flops_csv(_int_range(args.n), _int_range(args.m), _int_range(args.q)), args.out)
            return EXIT_OK
        scenario = _scenario(args)
        if args.command == "export-config":
            _emit(export_config(scenario.params, section_name(args.scenario)), args.out)
            return EXIT_OK
        if args.command == "run":
            rec = run_scenario(scenario, args.variant, args.weights, args.seed)
            _emit(record_csv(rec), args.out)
            if rec.failure is not None:
                print(f"filter failure at step {rec.failure_step}: {rec.failure}", file=sys.stderr)
                return EXIT_FILTER
            return EXIT_OK
        if args.command == "monte-carlo":
            report, _ = monte_carlo(scenario, args.variant, args.weights, args.runs, args.seed, args.jobs)
            _emit(report_csv(report), args.out)
            stats = consistency_stats(report)
            print(f"runs={report.n_runs} diverged={report.divergence_count}", file=sys.stderr)
            for i, (r, z) in enumerate(zip(stats["ratio"], stats["z"])):
                print(f"state {i}: sigma ratio {r:.3f}, mean-error z {z:.2f}", file=sys.stderr)
            return EXIT_OK
        if args.command == "compare":
            res = compare_forms(scenario, args.weights, args.seed)
            lines = ["variant,max_state_deviation,max_covariance_deviation"]
            for v in res["state"]:
                lines.append(f"{v},{res['state'][v]:.17g},{res['covariance'][v]:.17g}")
            _emit("\r\n".join(lines) + "\r\n", args.out)
            if any(f is not None for f in res["failures"].values()):
                return EXIT_FILTER
            return EXIT_OK
    except (ValueError, OSError) as exc:
        # bad input, including the ValueError-flavoured estimation errors
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimationError as exc:
        print(f"filter failure: {exc}", file=sys.stderr)
        return EXIT_FILTER
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
