"""Experiment configuration, simulate->estimate orchestration over parameter
grids, artifact persistence, and figure-data emission.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from . import estimate, model, simulate
from .model import ModelParams

__all__ = [
    "ExperimentRow",
    "ExperimentConfig",
    "RowResult",
    "ResultsTable",
    "ComparisonReport",
    "run_experiment",
    "emit_figure_data",
    "compare_to_reference",
    "reference_table",
    "default_config",
    "load_config",
    "save_config",
    "parse_ratio",
    "DEFAULT_TOLERANCES",
    "RESULTS_FORMAT_VERSION",
]

RESULTS_FORMAT_VERSION = 1
CONFIG_SCHEMA_VERSION = 1

#: Published reference estimates keyed by gamma/rho: (M, L, J, H).
_REFERENCE = {
    Fraction(1, 4): (-0.151, 0.674, 0.612, 0.263),
    Fraction(1, 2): (0.046, 0.562, 0.818, 0.505),
    Fraction(3, 4): (0.268, 0.510, 0.967, 0.753),
    Fraction(1, 1): (0.499, 0.500, 0.995, 0.999),
    Fraction(5, 4): (0.741, 0.506, 1.000, 1.241),
    Fraction(3, 2): (0.993, 0.517, 0.999, 1.477),
    Fraction(2, 1): (1.539, 0.548, 0.980, 1.904),
}

#: Full-scale simulation grid: ratio -> (N, T, delta, h).
_FULL_SCALE = {
    Fraction(1, 4): (1000, 1_000_000.0, 10_000.0, 1.0),
    Fraction(1, 2): (1000, 100_000.0, 1_000.0, 1.0),
    Fraction(3, 4): (1000, 20_000.0, 1_000.0, 1.0),
    Fraction(1, 1): (1000, 8_000.0, 200.0, 1.0),
    Fraction(5, 4): (1000, 2_000.0, 100.0, 1.0),
    Fraction(3, 2): (1000, 1_000.0, 100.0, 1.0),
    Fraction(2, 1): (1000, 200.0, 50.0, 1.0),
}

#: Rows whose full-scale horizons are too slow for a desk run; the desk-scale
#: profile divides N by 5 and T by 10 and re-tunes the averaging gap and fit
#: windows (slow regimes need early-window fits to expose the scaling).
_SLOW_RATIOS = (Fraction(1, 4), Fraction(1, 2))

DEFAULT_TOLERANCES = {"moses": 0.07, "noah": 0.05, "joseph": 0.05, "hurst": 0.05}

DEFAULT_BASE_SEED = 20260825


def parse_ratio(text) -> Fraction:
    """Parse a ratio label like '5/4', '1', or '0.75' to an exact Fraction."""
    if isinstance(text, Fraction):
        return text
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot parse ratio {text!r}") from exc


@dataclass(frozen=True)
class ExperimentRow:
    """One simulate->estimate unit: parameters plus averaging settings."""

    params: ModelParams
    n_paths: int
    horizon: float
    delta: float
    sampling_period: float = 1.0
    label: str | None = None
    fit_windows: dict = field(default_factory=dict)
    etamsd_window: tuple[float, float] | None = None

    @property
    def ratio(self) -> float:
        return self.params.hurst()

    def ensemble_spec(self, base_seed: int) -> simulate.EnsembleSpec:
        return simulate.EnsembleSpec(
            params=self.params, n_paths=self.n_paths, horizon=self.horizon,
            sampling_period=self.sampling_period, base_seed=base_seed,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    rows: tuple[ExperimentRow, ...]
    base_seed: int = DEFAULT_BASE_SEED
    output_dir: str = "polyadiff-out"
    store_ensembles: bool = False
    n_workers: int = 1


def _row_for_ratio(ratio: Fraction, desk_scale: bool) -> ExperimentRow:
    n, horizon, delta, h = _FULL_SCALE[ratio]
    fit_windows = {}
    etamsd_window = None
    if desk_scale and ratio in _SLOW_RATIOS:
        n = n // 5
        horizon = horizon / 10.0
        if ratio == Fraction(1, 4):
            # early-window fits: the sub-diffusive quadratic term is only
            # visible before the linear term takes over
            delta = 10.0
            fit_windows = {"velocity": (delta, 6 * delta)}
            etamsd_window = (1_000.0, horizon / 2.0)
        else:
            delta = delta / 10.0
    params = ModelParams(beta=1.0, gamma=float(ratio), rho=1.0)
    return ExperimentRow(
        params=params, n_paths=n, horizon=horizon, delta=delta,
        sampling_period=h, label=str(ratio), fit_windows=fit_windows,
        etamsd_window=etamsd_window,
    )


def default_config(profile: str = "paper",
                   ratios=None,
                   base_seed: int = DEFAULT_BASE_SEED,
                   output_dir: str = "polyadiff-out") -> ExperimentConfig:
    """The shipped simulation grid; profile 'desk-scale' shrinks slow rows."""
    if profile not in ("paper", "desk-scale"):
        raise ValueError(f"unknown profile {profile!r}")
    desk = profile == "desk-scale"
    if ratios is None:
        ratios = list(_FULL_SCALE)
    rows = tuple(_row_for_ratio(parse_ratio(r), desk) for r in ratios)
    return ExperimentConfig(rows=rows, base_seed=base_seed,
                            output_dir=output_dir)


@dataclass(frozen=True)
class RowResult:
    label: str
    ratio: float
    report: estimate.ExponentReport | None
    seed: int
    wall_time: float
    error: str | None = None


@dataclass(frozen=True)
class ResultsTable:
    rows: tuple[RowResult, ...]

    def by_label(self) -> dict:
        return {r.label: r for r in self.rows}

    def to_csv(self, include_wall_time: bool = True) -> str:
        cols = ["ratio", "moses", "noah", "joseph", "hurst",
                "r2_abs", "r2_sq", "r2_etamsd", "r2_msd", "seed"]
        if include_wall_time:
            cols.append("wall_time_s")
        lines = [f"#%format: gpp-results {RESULTS_FORMAT_VERSION}",
                 ",".join(["label"] + cols)]
        for r in self.rows:
            if r.report is None:
                vals = [r.label, f"{r.ratio:.17g}"] + ["ERROR"] * 8 + [str(r.seed)]
                if include_wall_time:
                    vals.append(f"{r.wall_time:.3f}")
                lines.append(",".join(vals))
                continue
            rep = r.report
            vals = [
                r.label, f"{r.ratio:.17g}",
                f"{rep.moses:.17g}", f"{rep.noah:.17g}",
                f"{rep.joseph:.17g}", f"{rep.hurst:.17g}",
                f"{rep.fits['abs_velocity'].r_squared:.17g}",
                f"{rep.fits['sq_velocity'].r_squared:.17g}",
                f"{rep.fits['etamsd'].r_squared:.17g}",
                f"{rep.fits['msd'].r_squared:.17g}",
                str(r.seed),
            ]
            if include_wall_time:
                vals.append(f"{r.wall_time:.3f}")
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def _run_row(row: ExperimentRow, base_seed: int, out_dir: Path | None,
             store_ensemble: bool, n_workers: int,
             render_figures: bool) -> RowResult:
    start = time.perf_counter()
    spec = row.ensemble_spec(base_seed)
    try:
        ensemble = simulate.simulate_ensemble(spec, n_workers=n_workers)
        gaps = None
        if row.etamsd_window is not None:
            lo, hi = row.etamsd_window
            gaps = estimate.default_etamsd_gaps(hi, row.sampling_period)
            gaps = gaps[gaps >= lo]
        report = estimate.estimate_exponents(
            ensemble, row.delta, fit_windows=row.fit_windows,
            etamsd_gaps=gaps,
        )
    except (simulate.CapacityError, estimate.FitError, ValueError) as exc:
        return RowResult(label=row.label or f"{row.ratio:g}", ratio=row.ratio,
                         report=None, seed=base_seed,
                         wall_time=time.perf_counter() - start, error=str(exc))

    if out_dir is not None:
        slug = (row.label or f"{row.ratio:g}").replace("/", "_")
        vel_times = _velocity_times_for_row(row)
        curves = {
            "abs_velocity": estimate.abs_velocity_average(ensemble, row.delta, vel_times),
            "sq_velocity": estimate.sq_velocity_average(ensemble, row.delta, vel_times),
            "etamsd": estimate.etamsd(
                ensemble, gaps if gaps is not None
                else estimate.default_etamsd_gaps(row.delta, row.sampling_period)),
            "msd": estimate.msd(
                ensemble, estimate.default_msd_times(row.horizon, row.sampling_period)),
        }
        for name, curve in curves.items():
            estimate.write_curve(curve, out_dir / f"row_{slug}_{name}.csv")
        _write_fit_summary(report, out_dir / f"row_{slug}_fits.txt", base_seed)
        if store_ensemble:
            simulate.write_ensemble(ensemble, out_dir / f"row_{slug}_ensemble.txt")
        if render_figures:
            from . import figures
            figures.render_row_curves(curves, report,
                                      out_dir / f"row_{slug}_curves.png",
                                      title=f"gamma/rho = {row.label}")

    return RowResult(label=row.label or f"{row.ratio:g}", ratio=row.ratio,
                     report=report, seed=base_seed,
                     wall_time=time.perf_counter() - start)


def _velocity_times_for_row(row: ExperimentRow) -> np.ndarray:
    if "velocity" in row.fit_windows:
        lo, hi = row.fit_windows["velocity"]
        qs = np.arange(max(1, int(math.ceil(lo / row.delta))),
                       int(math.floor(hi / row.delta)) + 1)
        return qs * row.delta
    return estimate.default_velocity_times(row.horizon, row.delta,
                                           row.sampling_period)


def _write_fit_summary(report: estimate.ExponentReport, path: Path,
                       seed: int) -> None:
    with open(path, "w") as f:
        f.write(f"#%format: gpp-fit-summary {RESULTS_FORMAT_VERSION}\n")
        f.write(f"seed: {seed}\n")
        for name, value in [("moses", report.moses), ("noah", report.noah),
                            ("joseph", report.joseph), ("hurst", report.hurst)]:
            f.write(f"{name}: {value:.17g}\n")
        f.write(f"relation_residual: {report.relation_residual:.17g}\n")
        for name, fit in report.fits.items():
            f.write(
                f"fit {name}: slope={fit.slope:.17g} intercept={fit.intercept:.17g} "
                f"r2={fit.r_squared:.17g} window=[{fit.window[0]:.17g},"
                f"{fit.window[1]:.17g}] n={fit.n_points} zeros={fit.n_zero_excluded}\n"
            )


def run_experiment(config: ExperimentConfig,
                   render_figures: bool = True) -> ResultsTable:
    """Run every row; per-row failures are recorded, remaining rows still run."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = [
        _run_row(row, config.base_seed, out_dir, config.store_ensembles,
                 config.n_workers, render_figures)
        for row in config.rows
    ]
    table = ResultsTable(rows=tuple(results))
    (out_dir / "results.csv").write_text(table.to_csv())
    return table


# -- comparison ----------------------------------------------------------

@dataclass(frozen=True)
class CellComparison:
    label: str
    exponent: str
    estimated: float
    reference: float
    tolerance: float

    @property
    def difference(self) -> float:
        return abs(self.estimated - self.reference)

    @property
    def passed(self) -> bool:
        return self.difference <= self.tolerance


@dataclass(frozen=True)
class ComparisonReport:
    cells: tuple[CellComparison, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells)

    def to_text(self) -> str:
        lines = []
        for c in self.cells:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"{status} {c.label:>4} {c.exponent:<6} "
                f"est={c.estimated:+.3f} ref={c.reference:+.3f} "
                f"|diff|={c.difference:.3f} tol={c.tolerance:.3f}"
            )
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def reference_table() -> dict:
    """Published exponent estimates keyed by ratio label."""
    return {str(k): v for k, v in _REFERENCE.items()}


def compare_to_reference(table: ResultsTable,
                         reference: dict | None = None,
                         tolerances: dict | None = None) -> ComparisonReport:
    """Cell-by-cell absolute differences against the reference estimates."""
    reference = reference if reference is not None else reference_table()
    tol = dict(DEFAULT_TOLERANCES)
    if tolerances:
        tol.update(tolerances)
    by_label = table.by_label()
    missing = set(by_label) - set(reference)
    if missing:
        raise KeyError(f"no reference values for rows {sorted(missing)}")
    cells = []
    for label, row in by_label.items():
        ref_m, ref_l, ref_j, ref_h = reference[label]
        if row.report is None:
            raise RuntimeError(f"row {label} failed: {row.error}")
        rep = row.report
        for exp_name, est, ref in [
            ("moses", rep.moses, ref_m), ("noah", rep.noah, ref_l),
            ("joseph", rep.joseph, ref_j), ("hurst", rep.hurst, ref_h),
        ]:
            cells.append(CellComparison(label=label, exponent=exp_name,
                                        estimated=est, reference=ref,
                                        tolerance=tol[exp_name]))
    return ComparisonReport(cells=tuple(cells))


# -- figure data ---------------------------------------------------------

FIGURE_KINDS = ("autocorrelation", "regime_diagram", "increment_pmf",
                "scaling_curves")


def emit_figure_data(kind: str, path, params: ModelParams | None = None,
                     table: ResultsTable | None = None) -> None:
    """Write plot-ready delimited data for one analytic figure."""
    path = Path(path)
    if kind == "autocorrelation":
        _emit_autocorrelation(path)
    elif kind == "regime_diagram":
        _emit_regime_diagram(path)
    elif kind == "increment_pmf":
        _emit_increment_pmf(path, params)
    elif kind == "scaling_curves":
        if table is None:
            raise ValueError("scaling_curves needs a results table")
        path.write_text(table.to_csv())
    else:
        raise ValueError(f"unknown figure kind {kind!r}; "
                         f"expected one of {FIGURE_KINDS}")


def _emit_autocorrelation(path: Path, s: float = 3.0) -> None:
    ratios = [Fraction(1, 4), Fraction(1, 2), Fraction(1, 1), Fraction(2, 1)]
    ts = np.geomspace(s, 1e6, 200)
    cols = []
    header = ["t"]
    for ratio in ratios:
        p = ModelParams(beta=1.0, gamma=float(ratio), rho=1.0)
        cols.append(model.autocorrelation(p, s, ts))
        header.append(f"corr_{ratio}")
        cols.append(np.full_like(ts, float(model.autocorrelation_limit(p, s))))
        header.append(f"limit_{ratio}")
    with open(path, "w") as f:
        f.write(f"#%format: gpp-figure-autocorrelation {RESULTS_FORMAT_VERSION}\n")
        f.write(f"#%s: {s!r}\n")
        f.write(",".join(header) + "\n")
        for i, t in enumerate(ts):
            f.write(",".join([f"{t:.17g}"] + [f"{c[i]:.17g}" for c in cols]) + "\n")


def _emit_regime_diagram(path: Path, n_grid: int = 41) -> None:
    rhos = np.linspace(0.1, 4.0, n_grid)
    gammas = np.linspace(0.1, 4.0, n_grid)
    with open(path, "w") as f:
        f.write(f"#%format: gpp-figure-regimes {RESULTS_FORMAT_VERSION}\n")
        f.write("rho,gamma,regime\n")
        for rho in rhos:
            for gamma in gammas:
                regime = model.classify_regime(
                    ModelParams(beta=1.0, gamma=gamma, rho=rho))
                f.write(f"{rho:.17g},{gamma:.17g},{regime.value}\n")


def _emit_increment_pmf(path: Path, params: ModelParams | None) -> None:
    """Displacement pmf at three time-scale ratios with a Gaussian overlay."""
    params = params or ModelParams(beta=1.0, gamma=1.0, rho=1.0)
    s = 10.0
    with open(path, "w") as f:
        f.write(f"#%format: gpp-figure-increment-pmf {RESULTS_FORMAT_VERSION}\n")
        f.write(f"#%beta: {params.beta!r}\n#%gamma: {params.gamma!r}\n")
        f.write(f"#%rho: {params.rho!r}\n#%s: {s!r}\n")
        f.write("tau_over_s,n,pmf,gaussian\n")
        for ratio in (0.1, 1.0, 10.0):
            tau = ratio * s
            mu = float(model.increment_mean(params, s, s + tau))
            var = float(model.increment_variance(params, s, s + tau))
            n_max = int(mu + 8 * math.sqrt(var)) + 10
            ns = np.arange(n_max + 1)
            pmf = model.increment_pmf(params, ns, s, s + tau)
            gauss = (np.exp(-((ns - mu) ** 2) / (2 * var))
                     / math.sqrt(2 * math.pi * var))
            for n, p, g in zip(ns, pmf, gauss):
                f.write(f"{ratio:.17g},{n},{p:.17g},{g:.17g}\n")


# -- config persistence --------------------------------------------------

def save_config(config: ExperimentConfig, path) -> None:
    doc = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "base_seed": config.base_seed,
        "output_dir": config.output_dir,
        "store_ensembles": config.store_ensembles,
        "n_workers": config.n_workers,
        "rows": [
            {
                "label": row.label,
                "beta": row.params.beta,
                "gamma": row.params.gamma,
                "rho": row.params.rho,
                "n_paths": row.n_paths,
                "horizon": row.horizon,
                "delta": row.delta,
                "sampling_period": row.sampling_period,
                **({"fit_windows": {k: list(v) for k, v in row.fit_windows.items()}}
                   if row.fit_windows else {}),
                **({"etamsd_window": list(row.etamsd_window)}
                   if row.etamsd_window else {}),
            }
            for row in config.rows
        ],
    }
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        doc = yaml.safe_load(f)
    if doc.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ValueError(f"unsupported config schema: {doc.get('schema_version')}")
    rows = []
    for entry in doc.get("rows", []):
        if "gamma_over_rho" in entry:
            ratio = parse_ratio(entry["gamma_over_rho"])
            params = ModelParams(beta=1.0, gamma=float(ratio), rho=1.0)
            label = entry.get("label", str(ratio))
        else:
            params = ModelParams(beta=float(entry["beta"]),
                                 gamma=float(entry["gamma"]),
                                 rho=float(entry["rho"]))
            label = entry.get("label")
        rows.append(ExperimentRow(
            params=params,
            n_paths=int(entry["n_paths"]),
            horizon=float(entry["horizon"]),
            delta=float(entry["delta"]),
            sampling_period=float(entry.get("sampling_period", 1.0)),
            label=label,
            fit_windows={k: tuple(v) for k, v in
                         entry.get("fit_windows", {}).items()},
            etamsd_window=(tuple(entry["etamsd_window"])
                           if "etamsd_window" in entry else None),
        ))
    return ExperimentConfig(
        rows=tuple(rows),
        base_seed=int(doc.get("base_seed", DEFAULT_BASE_SEED)),
        output_dir=doc.get("output_dir", "polyadiff-out"),
        store_ensembles=bool(doc.get("store_ensembles", False)),
        n_workers=int(doc.get("n_workers", 1)),
    )
