"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime/numeric error,
3 reference-comparison failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import estimate, experiment, model, simulate
from .model import ModelParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_COMPARE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse parser that reports usage problems with exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="polyadiff",
                     description="Contagious birth-process diffusion toolkit: "
                                 "exact simulation and scaling-exponent estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=experiment.DEFAULT_BASE_SEED,
                       help="base RNG seed (default %(default)s)")
        p.add_argument("--output", type=Path, default=None,
                       help="output file or directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="serialization for printed results")

    p = sub.add_parser("simulate", help="generate an ensemble file")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--sampling-period", type=float, required=True)
    p.add_argument("--out", type=Path, default=None,
                   help="ensemble file path (default: ensemble.txt)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--event-cap", type=int, default=simulate.DEFAULT_EVENT_CAP)
    common(p)

    p = sub.add_parser("analyze", help="estimate exponents from an ensemble file")
    p.add_argument("--ensemble", type=Path, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--fit-lo", type=float, default=None)
    p.add_argument("--fit-hi", type=float, default=None)
    common(p)

    p = sub.add_parser("pmf", help="evaluate the analytic displacement laws")
    p.add_argument("--kind", choices=("transition", "increment", "joint"),
                   required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--k", type=int, default=0,
                   help="initial count (transition kind)")
    p.add_argument("--s2", type=float, default=None, help="joint: second interval start")
    p.add_argument("--t2", type=float, default=None, help="joint: second interval end")
    p.add_argument("--range", dest="n_range", type=int, default=10,
                   help="evaluate n = 0..RANGE (default %(default)s)")
    common(p)

    p = sub.add_parser("reproduce", help="rerun the reference simulation grid")
    p.add_argument("--profile", choices=("paper", "desk-scale"),
                   default="desk-scale")
    p.add_argument("--rows", type=str, default=None,
                   help="comma-separated gamma/rho labels, e.g. '1,5/4,3/2'")
    p.add_argument("--compare", action="store_true",
                   help="gate against the published exponent table (exit 3 on fail)")
    p.add_argument("--store-ensembles", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering of the per-row curves")
    common(p)

    p = sub.add_parser("figures", help="emit plot data and render one figure")
    p.add_argument("--which", type=int, required=True,
                   help="1 autocorrelation, 2 regime diagram, 3 increment pmf, "
                        "4 scaling curves (superdiffusive example)")
    p.add_argument("--out-dir", type=Path,
                   default=Path(os.environ.get("POLYADIFF_OUTPUT",
                                               "figures-out")))
    common(p)

    return parser


def _dump(obj: dict, fmt: str, stream=None) -> None:
    stream = stream if stream is not None else sys.stdout
    if fmt == "json":
        json.dump(obj, stream, indent=2)
        stream.write("\n")
    else:
        for key, value in obj.items():
            if isinstance(value, (list, tuple, np.ndarray)):
                value = " ".join(f"{v:.17g}" for v in value)
            elif isinstance(value, float):
                value = f"{value:.17g}"
            stream.write(f"{key},{value}\n")


def _cmd_simulate(args) -> int:
    params = ModelParams(beta=args.beta, gamma=args.gamma, rho=args.rho)
    spec = simulate.EnsembleSpec(params=params, n_paths=args.paths,
                                 horizon=args.horizon,
                                 sampling_period=args.sampling_period,
                                 base_seed=args.seed)
    ensemble = simulate.simulate_ensemble(spec, event_cap=args.event_cap,
                                          n_workers=args.workers)
    out = args.out or args.output or Path("ensemble.txt")
    simulate.write_ensemble(ensemble, out)
    final = ensemble.counts[:, -1]
    summary = {
        "paths": args.paths,
        "events_min": int(final.min()),
        "events_mean": float(final.mean()),
        "events_max": int(final.max()),
        "file": str(out),
    }
    _dump(summary, args.format)
    return EXIT_OK


def _cmd_analyze(args) -> int:
    ensemble = simulate.read_ensemble(args.ensemble)
    h = ensemble.spec.sampling_period
    m = args.delta / h
    if abs(m - round(m)) > 1e-9 or round(m) < 1:
        raise UsageError(f"--delta {args.delta} is not a multiple of the "
                         f"sampling period {h}")
    fit_windows = {}
    if args.fit_lo is not None or args.fit_hi is not None:
        lo = args.fit_lo if args.fit_lo is not None else args.delta
        hi = args.fit_hi if args.fit_hi is not None else ensemble.spec.horizon
        fit_windows["velocity"] = (lo, hi)
    report = estimate.estimate_exponents(ensemble, args.delta,
                                         fit_windows=fit_windows)
    out_dir = args.output or args.ensemble.parent
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    vel_times = estimate.default_velocity_times(ensemble.spec.horizon,
                                                args.delta, h)
    for name, curve in [
        ("abs_velocity", estimate.abs_velocity_average(ensemble, args.delta, vel_times)),
        ("sq_velocity", estimate.sq_velocity_average(ensemble, args.delta, vel_times)),
        ("etamsd", estimate.etamsd(ensemble, estimate.default_etamsd_gaps(args.delta, h))),
        ("msd", estimate.msd(ensemble, estimate.default_msd_times(ensemble.spec.horizon, h))),
    ]:
        estimate.write_curve(curve, Path(out_dir) / f"{args.ensemble.stem}_{name}.csv")
    _dump({
        "moses": report.moses, "noah": report.noah,
        "joseph": report.joseph, "hurst": report.hurst,
        "relation_residual": report.relation_residual,
        "relation_flagged": report.relation_flagged,
    }, args.format)
    return EXIT_OK


def _cmd_pmf(args) -> int:
    params = ModelParams(beta=args.beta, gamma=args.gamma, rho=args.rho)
    ns = np.arange(args.n_range + 1)
    if args.kind == "transition":
        values = model.transition_pmf(params, args.k, ns, args.s, args.t)
        mean_ = float(np.sum(ns * values))
    elif args.kind == "increment":
        values = model.increment_pmf(params, ns, args.s, args.t)
        mean_ = float(model.increment_mean(params, args.s, args.t))
    else:
        if args.s2 is None or args.t2 is None:
            raise UsageError("joint pmf needs --s2 and --t2")
        if not (0 <= args.s < args.t <= args.s2 < args.t2):
            raise UsageError("joint pmf needs 0 <= s < t <= s2 < t2 "
                             "(disjoint ordered intervals)")
        values = np.array([
            float(model.joint_increment_pmf(params, n, n2, args.s, args.t,
                                            args.s2, args.t2))
            for n in ns for n2 in ns
        ])
        mean_ = float(model.increment_covariance(params, args.s, args.t,
                                                 args.s2, args.t2))
    out = {"kind": args.kind, "values": [float(v) for v in values]}
    out["covariance" if args.kind == "joint" else "mean"] = mean_
    _dump(out, args.format)
    if args.output is not None:
        with open(args.output, "w") as f:
            _dump(out, args.format, stream=f)
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    ratios = None
    if args.rows is not None:
        known = set(experiment.reference_table())
        ratios = []
        for token in args.rows.split(","):
            token = token.strip()
            try:
                label = str(experiment.parse_ratio(token))
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            if label not in known:
                known_sorted = sorted(known, key=experiment.parse_ratio)
                raise UsageError(f"unknown ratio {token!r}; known rows: "
                                 f"{known_sorted}")
            ratios.append(label)
    out_dir = args.output or Path(os.environ.get("POLYADIFF_OUTPUT",
                                                 "reproduce-out"))
    config = experiment.default_config(profile=args.profile, ratios=ratios,
                                       base_seed=args.seed,
                                       output_dir=str(out_dir))
    config = experiment.ExperimentConfig(
        rows=config.rows, base_seed=config.base_seed,
        output_dir=config.output_dir,
        store_ensembles=args.store_ensembles, n_workers=args.workers)
    table = experiment.run_experiment(config,
                                      render_figures=not args.no_figures)
    print(table.to_csv(), end="")
    failed = [r for r in table.rows if r.report is None]
    if failed:
        for r in failed:
            print(f"row {r.label} failed: {r.error}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.compare:
        cmp_report = experiment.compare_to_reference(table)
        print(cmp_report.to_text())
        if not cmp_report.passed:
            return EXIT_COMPARE
    return EXIT_OK


def _cmd_figures(args) -> int:
    from . import figures
    out_dir = args.output or args.out_dir
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    which = args.which
    if which == 1:
        data = out_dir / "autocorrelation.csv"
        experiment.emit_figure_data("autocorrelation", data)
        figures.render_autocorrelation(data, out_dir / "autocorrelation.png")
    elif which == 2:
        data = out_dir / "regime_diagram.csv"
        experiment.emit_figure_data("regime_diagram", data)
        figures.render_regime_diagram(data, out_dir / "regime_diagram.png")
    elif which == 3:
        data = out_dir / "increment_pmf.csv"
        experiment.emit_figure_data("increment_pmf", data)
        figures.render_increment_pmf(data, out_dir / "increment_pmf.png")
    elif which == 4:
        # reduced-scale superdiffusive example: four observables with fits
        row = experiment.ExperimentRow(
            params=ModelParams(beta=1.0, gamma=0.75, rho=1.0),
            n_paths=200, horizon=20_000.0, delta=1_000.0, label="3/4")
        spec = row.ensemble_spec(args.seed)
        ensemble = simulate.simulate_ensemble(spec)
        report = estimate.estimate_exponents(ensemble, row.delta)
        vel_times = estimate.default_velocity_times(row.horizon, row.delta, 1.0)
        curves = {
            "abs_velocity": estimate.abs_velocity_average(ensemble, row.delta, vel_times),
            "sq_velocity": estimate.sq_velocity_average(ensemble, row.delta, vel_times),
            "etamsd": estimate.etamsd(ensemble, estimate.default_etamsd_gaps(row.delta, 1.0)),
            "msd": estimate.msd(ensemble, estimate.default_msd_times(row.horizon, 1.0)),
        }
        for name, curve in curves.items():
            estimate.write_curve(curve, out_dir / f"scaling_{name}.csv")
        figures.render_row_curves(curves, report, out_dir / "scaling_curves.png",
                                  title="gamma/rho = 3/4")
    else:
        raise UsageError(f"unknown figure id {which}; expected 1..4")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "pmf": _cmd_pmf,
    "reproduce": _cmd_reproduce,
    "figures": _cmd_figures,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (simulate.CapacityError, simulate.EnsembleFormatError,
            estimate.FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
