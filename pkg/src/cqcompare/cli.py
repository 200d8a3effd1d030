"""Command-line entry point: ``cqcompare {fit,test,simulate,calibrate}``.

Every option can also be given in a JSON config file (``--config``) whose
keys are the option names with dashes replaced by underscores; explicit
command-line options win. ``CQCOMPARE_THREADS`` sets the default thread
count. Errors are reported as one JSON object on stderr; the exit code is 2
for usage errors and 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .bootstrap import BootstrapError, BootstrapScheme
from .dataio import (
    DatasetSchema,
    atomic_write,
    coefficients_csv,
    dumps_json,
    emit_band_table,
    load_csv,
)
from .dgp import DgpConfig, calibrate_censoring
from .estimator import PengHuang
from .simulate import ScenarioGrid, diff_family, full_bootstrap_study, warp_speed_study
from .teststats import TestConfig, run_test
from .types import BreakdownError, DataError, PairedData, SampleData, make_grid

THREADS_ENV = "CQCOMPARE_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(v) for v in text.split(",") if v.strip() != "")
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="JSON file with option defaults")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=_default_threads())
    g.add_argument("--grid-step", type=float, default=0.01)
    g.add_argument("--tau-lo", type=float, default=0.1)
    g.add_argument("--tau-hi", type=float, default=0.6)
    g.add_argument("--tau-max", type=float, default=None, help="last estimation level (default: --tau-hi)")
    g.add_argument("--alpha", type=float, default=0.05)
    g.add_argument("--boot", type=int, default=500)
    g.add_argument("--scheme", choices=("multiplier", "naive"), default="multiplier")
    g.add_argument("--no-standardize", action="store_true")
    g.add_argument("--statistic", choices=("l2", "linf", "bonf", "all"), default="all")
    g.add_argument("--paired", action="store_true")
    g.add_argument("--integration", choices=("exact", "grid"), default="exact")
    return p


def _dataset_args(p):
    g = p.add_argument_group("dataset")
    g.add_argument("data", help="CSV file")
    g.add_argument("--time", default="time")
    g.add_argument("--status", default="status")
    g.add_argument("--covariates", type=_csv_list(str), default=())
    g.add_argument("--group")
    g.add_argument("--pair-id")
    g.add_argument("--arm")
    g.add_argument("--levels", type=_csv_list(str), default=None, help="values forming sample 1 and 2")
    g.add_argument("--subset", default=None, help="COLUMN=VALUE row filter")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--no-header", action="store_true")


def _dgp_args(p):
    g = p.add_argument_group("data-generating process")
    g.add_argument("--model", type=int, choices=(1, 2, 3), default=1)
    g.add_argument("--setting", type=int, choices=(1, 2), default=1)
    g.add_argument("--n1", type=int, default=200)
    g.add_argument("--n2", type=int, default=200)
    g.add_argument("--eta", type=float, default=0.0, help="error covariance (paired design)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="cqcompare", description="Compare censored quantile regression curves of two samples.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit coefficient processes")
    _dataset_args(p)
    p.add_argument("--out", help="coefficient CSV (default: stdout)")

    p = sub.add_parser("test", parents=[common], help="bootstrap test of equal quantile curves")
    _dataset_args(p)
    p.add_argument("--out", help="JSON report (default: stdout)")
    p.add_argument("--bands", help="band table CSV")
    p.add_argument("--component-subset", type=_csv_list(int), default=None)
    p.add_argument("--upper-tail", action="store_true")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo rejection rates")
    _dgp_args(p)
    p.add_argument("--diffs", type=_csv_list(float), default=(0.0, 0.2, 0.4))
    p.add_argument("--censoring", type=float, default=0.2, help="target censoring fraction (0: none)")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--mode", choices=("warp", "full"), default="warp")
    p.add_argument("--pilot", type=int, default=20, help="pilot draws per replication (warp mode)")
    p.add_argument("--timing", action="store_true", help="add wall-time column")
    p.add_argument("--out", help="report CSV (default: stdout)")

    p = sub.add_parser("calibrate", parents=[common], help="censoring bounds for a target rate")
    _dgp_args(p)
    p.add_argument("--diff", type=float, default=0.0)
    p.add_argument("--target", type=float, default=None, help="censoring fraction (required)")
    p.add_argument("--draws", type=int, default=1_000_000)
    p.add_argument("--out", help="JSON output (default: stdout)")
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        known = vars(args)
        unknown = sorted(k for k in cfg if k not in known or k in ("command", "config"))
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        # re-parse so that explicit flags override the file
        sp = parser._subparsers._group_actions[0].choices[args.command]
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _emit(path, text):
    if path:
        atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _schema(args) -> DatasetSchema:
    subset = None
    if args.subset:
        if "=" not in args.subset:
            raise UsageError("--subset expects COLUMN=VALUE")
        col, val = args.subset.split("=", 1)
        subset = (col, val)
    if args.paired and not args.pair_id:
        raise UsageError("--paired needs --pair-id and --arm")
    try:
        return DatasetSchema(
            time=args.time,
            status=args.status,
            covariates=tuple(args.covariates),
            group=args.group,
            pair_id=args.pair_id,
            arm=args.arm,
            levels=tuple(args.levels) if args.levels else None,
            delimiter=args.delimiter,
            header=not args.no_header,
            subset=subset,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid(args):
    tau_max = args.tau_max if args.tau_max is not None else args.tau_hi
    try:
        return make_grid(tau_max, args.grid_step, args.tau_lo, args.tau_hi)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _effective(args) -> dict:
    # neither the thread count nor output locations change results
    skip = ("config", "threads", "out", "bands", "timing")
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}


def _names(args):
    return ["intercept", *args.covariates]


def cmd_fit(args):
    grid = _grid(args)
    data = load_csv(args.data, _schema(args))
    est = PengHuang(args.integration)
    if isinstance(data, SampleData):
        samples = {"1": data}
    else:
        samples = {"1": data.sample1, "2": data.sample2}
    procs = {label: est.fit(s, grid) for label, s in samples.items()}
    _emit(args.out, coefficients_csv(procs, _names(args)))
    for label, proc in procs.items():
        if not proc.covers_analysis():
            raise BreakdownError(f"sample {label}: estimation breaks down before tau_hi", proc.max_tau)
    return 0


def cmd_test(args):
    grid = _grid(args)
    data = load_csv(args.data, _schema(args))
    if isinstance(data, SampleData):
        raise UsageError("the test needs two samples (--group or --pair-id)")
    config = TestConfig(
        statistic=args.statistic,
        alpha=args.alpha,
        standardize=not args.no_standardize,
        component_subset=tuple(args.component_subset) if args.component_subset else None,
        n_boot=args.boot,
        seed=args.seed,
        upper_tail=args.upper_tail,
    )
    scheme = BootstrapScheme(args.scheme, paired=isinstance(data, PairedData))
    est = PengHuang(args.integration)
    result, point, boot = run_test(data, est, grid, scheme, config, threads=args.threads)
    names = _names(args)
    report = {
        "config": _effective(args),
        "design": "paired" if scheme.paired else "independent",
        "sample_sizes": [data.sample1.n, data.sample2.n],
        "grid": {
            "levels": grid.levels.tolist(),
            "analysis_levels": grid.analysis_levels.tolist(),
            "snapped": list(grid.snapped) if grid.snapped else None,
            "interval": bool(grid.interval),
        },
        "coefficient_names": names,
        "result": result.to_dict(),
    }
    _emit(args.out, dumps_json(report))
    if args.bands:
        atomic_write(args.bands, emit_band_table(point, boot, grid.analysis_levels, names).to_csv())
    return 0


def cmd_simulate(args):
    if args.mode == "warp" and args.reps < 2:
        raise UsageError("warp-speed needs --reps >= 2")
    if args.mode == "full" and args.boot < 50:
        raise UsageError("full bootstrap studies need --boot >= 50")
    censoring = args.censoring if args.censoring > 0 else None
    try:
        scen = diff_family(
            args.model,
            args.setting,
            paired=args.paired,
            eta=args.eta,
            n1=args.n1,
            n2=args.n2,
            censoring=censoring,
            diffs=args.diffs,
            tau_lo=args.tau_lo,
            tau_hi=args.tau_hi,
        )
        test = TestConfig(
            statistic="all",
            alpha=args.alpha,
            standardize=not args.no_standardize,
            n_boot=max(args.boot, 2),
            seed=args.seed,
        )
        grid = ScenarioGrid(scen, test=test, replications=args.reps, pilot_draws=args.pilot, scheme=args.scheme)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    est = PengHuang(args.integration)
    if args.mode == "warp":
        report = warp_speed_study(grid, args.seed, estimator=est, threads=args.threads)
    else:
        report = full_bootstrap_study(grid, args.boot, args.seed, estimator=est, threads=args.threads)
    _emit(args.out, report.to_csv(timing=args.timing))
    return 0


def cmd_calibrate(args):
    if args.target is None:
        raise UsageError("--target is required")
    try:
        cfg = DgpConfig(
            model=args.model,
            beta1=(0.0, -0.5, 0.5),
            beta2=(0.0, -0.5 + args.diff, 0.5),
            setting=args.setting,
            paired=args.paired,
            eta=args.eta,
            n1=args.n1,
            n2=args.n1 if args.paired else args.n2,
        )
        c1, c2 = calibrate_censoring(cfg, args.target, draws=args.draws, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(args.out, dumps_json({"config": _effective(args), "censor_bounds": [c1, c2]}))
    return 0


COMMANDS = {"fit": cmd_fit, "test": cmd_test, "simulate": cmd_simulate, "calibrate": cmd_calibrate}


def _fail(code, kind, message, **extra):
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")
    return code


def cli_main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(2, "usage", str(exc))
    except BreakdownError as exc:
        return _fail(1, "breakdown", str(exc), max_tau=exc.max_tau)
    except BootstrapError as exc:
        return _fail(1, "bootstrap", str(exc))
    except DataError as exc:
        return _fail(1, "data", str(exc))
    except (OSError, ValueError) as exc:
        return _fail(1, "runtime", str(exc))
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
