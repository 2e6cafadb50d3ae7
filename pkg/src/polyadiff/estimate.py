"""Ensemble-time averaged observables, log-log fits, and the four
scaling exponents (Moses, Noah, Joseph, Hurst) with fit diagnostics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .simulate import Ensemble

__all__ = [
    "ObservableKind",
    "ScalingCurve",
    "FitResult",
    "ExponentReport",
    "FitError",
    "abs_velocity_average",
    "sq_velocity_average",
    "etamsd",
    "msd",
    "velocity_autocorrelation",
    "loglog_fit",
    "estimate_exponents",
    "default_velocity_times",
    "default_etamsd_gaps",
    "default_msd_times",
    "write_curve",
    "read_curve",
]

CURVE_FORMAT = "gpp-curve"
CURVE_FORMAT_VERSION = 1

#: The summation relation residual |H - (M + L + J - 1)| above which a report
#: is flagged as suspicious.
RELATION_FLAG_THRESHOLD = 0.1

#: Abort a log-log fit when more than this fraction of window points has a
#: zero ordinate (deep-subdiffusion measurement breakdown).
MAX_ZERO_FRACTION = 0.2

#: Maximum number of evaluation points per curve (log-spaced thinning).
DEFAULT_CURVE_POINTS = 40


class ObservableKind(enum.Enum):
    ABS_VELOCITY = "abs-velocity"
    SQ_VELOCITY = "sq-velocity"
    ETAMSD = "etamsd"
    MSD = "msd"
    VELOCITY_AUTOCORR = "velocity-autocorrelation"


class FitError(RuntimeError):
    """Raised when a log-log fit has too few usable points."""

    def __init__(self, message: str, observable: str | None = None):
        self.observable = observable
        super().__init__(message if observable is None
                         else f"{observable}: {message}")


@dataclass(frozen=True)
class ScalingCurve:
    abscissa: np.ndarray
    ordinate: np.ndarray
    kind: ObservableKind
    n_paths: int
    std_error: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.abscissa, dtype=float)
        y = np.asarray(self.ordinate, dtype=float)
        if x.size != y.size or x.size < 1:
            raise ValueError("abscissa and ordinate must have equal nonzero length")
        if np.any(np.diff(x) <= 0) or np.any(x <= 0):
            raise ValueError("abscissa must be strictly increasing and positive")
        if not np.all(np.isfinite(y)):
            raise ValueError("ordinates must be finite")
        object.__setattr__(self, "abscissa", x)
        object.__setattr__(self, "ordinate", y)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    n_points: int
    n_zero_excluded: int = 0


@dataclass(frozen=True)
class ExponentReport:
    moses: float
    noah: float
    joseph: float
    hurst: float
    fits: dict = field(default_factory=dict)

    @property
    def relation_residual(self) -> float:
        """H - (M + L + J - 1); near zero when the four fits are consistent."""
        return self.hurst - (self.moses + self.noah + self.joseph - 1.0)

    @property
    def relation_flagged(self) -> bool:
        return abs(self.relation_residual) > RELATION_FLAG_THRESHOLD


# -- observable averages -------------------------------------------------

def _gap_steps(ensemble: Ensemble, delta: float) -> int:
    h = ensemble.spec.sampling_period
    m = delta / h
    if abs(m - round(m)) > 1e-9 or round(m) < 1:
        raise ValueError(f"delta={delta} is not a positive multiple of h={h}")
    return int(round(m))


def _window_counts(ensemble: Ensemble, delta: float, eval_times) -> tuple:
    """Validate eval_times as whole multiples of delta; return (qs, increments)."""
    m = _gap_steps(ensemble, delta)
    eval_times = np.asarray(eval_times, dtype=float)
    qs = eval_times / delta
    if np.any(np.abs(qs - np.round(qs)) > 1e-9) or np.any(np.round(qs) < 1):
        raise ValueError("every eval time must be a positive multiple of delta "
                         "(partial windows are not averaged)")
    qs = np.round(qs).astype(int)
    n_grid = ensemble.counts.shape[1]
    if qs.max() * m > n_grid - 1:
        raise ValueError("eval time exceeds the ensemble horizon")
    # increments over consecutive windows of length delta, per path
    window_marks = ensemble.counts[:, ::m][:, : qs.max() + 1]
    incr = np.diff(window_marks, axis=1)
    return qs, incr


def abs_velocity_average(ensemble: Ensemble, delta: float, eval_times) -> ScalingCurve:
    """<(delta/t) sum_j |dX_j|/delta> over the ensemble, at each eval time.

    Paths are nondecreasing so |dX| = dX; the absolute value is still applied
    to keep the estimator valid for signed inputs.
    """
    qs, incr = _window_counts(ensemble, delta, eval_times)
    cum = np.cumsum(np.abs(incr), axis=1)
    per_path = cum[:, qs - 1] / (qs * delta)         # == (1/t) sum |dX|
    return _curve_from_per_path(ensemble, np.asarray(eval_times, float),
                                per_path, ObservableKind.ABS_VELOCITY)


def sq_velocity_average(ensemble: Ensemble, delta: float, eval_times) -> ScalingCurve:
    """<(delta/t) sum_j (dX_j/delta)^2> over the ensemble, at each eval time."""
    qs, incr = _window_counts(ensemble, delta, eval_times)
    cum = np.cumsum(incr.astype(np.float64) ** 2, axis=1)
    per_path = cum[:, qs - 1] / (qs * delta * delta)  # == (1/(t delta)) sum dX^2
    return _curve_from_per_path(ensemble, np.asarray(eval_times, float),
                                per_path, ObservableKind.SQ_VELOCITY)


def etamsd(ensemble: Ensemble, delta_values) -> ScalingCurve:
    """Ensemble average of the sliding time-averaged squared displacement.

    For each gap delta = m*h: mean over all window starts k of
    (X(kh + delta) - X(kh))^2, time-averaged per path, then ensemble-averaged.
    """
    delta_values = np.asarray(delta_values, dtype=float)
    n_grid = ensemble.counts.shape[1]
    horizon = ensemble.spec.horizon
    per_path_cols = []
    for delta in delta_values:
        if delta > horizon / 2:
            raise ValueError(f"delta={delta} > T/2 leaves too few windows")
        m = _gap_steps(ensemble, delta)
        d = ensemble.counts[:, m:] - ensemble.counts[:, :n_grid - m]
        per_path_cols.append(np.mean(d.astype(np.float64) ** 2, axis=1))
    per_path = np.column_stack(per_path_cols)
    return _curve_from_per_path(ensemble, delta_values, per_path,
                                ObservableKind.ETAMSD)


def msd(ensemble: Ensemble, eval_times) -> ScalingCurve:
    """Plain ensemble second moment <X^2(t)> at grid times."""
    eval_times = np.asarray(eval_times, dtype=float)
    h = ensemble.spec.sampling_period
    idx = eval_times / h
    if np.any(np.abs(idx - np.round(idx)) > 1e-9):
        raise ValueError("eval times must lie on the sampling grid")
    idx = np.round(idx).astype(int)
    if idx.max() > ensemble.counts.shape[1] - 1:
        raise ValueError("eval time exceeds the ensemble horizon")
    per_path = ensemble.counts[:, idx].astype(np.float64) ** 2
    return _curve_from_per_path(ensemble, eval_times, per_path,
                                ObservableKind.MSD)


def velocity_autocorrelation(ensemble: Ensemble, t: float, delta_values) -> ScalingCurve:
    """Empirical <d(t-1,t) d(t-1+D, t+D)> / <d^2(t-1,t)> over gaps D.

    Increments span unit-length intervals; validates the Joseph exponent
    independently of the sliding-window shortcut (flat curve <=> J = 1).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    h = ensemble.spec.sampling_period
    unit = _gap_steps(ensemble, 1.0) if h <= 1 else None
    if unit is None:
        raise ValueError("unit-length increments need sampling_period <= 1")
    delta_values = np.asarray(delta_values, dtype=float)
    i_t = int(round(t / h))
    n_grid = ensemble.counts.shape[1]
    d_ref = (ensemble.counts[:, i_t] - ensemble.counts[:, i_t - unit]).astype(float)
    denom = np.mean(d_ref ** 2)
    if denom == 0:
        raise FitError("reference increment is identically zero",
                       ObservableKind.VELOCITY_AUTOCORR.value)
    ords = []
    for delta in delta_values:
        lag = int(round(delta / h))
        if i_t + lag > n_grid - 1:
            raise ValueError("t + delta exceeds the ensemble horizon")
        d_lag = (ensemble.counts[:, i_t + lag]
                 - ensemble.counts[:, i_t + lag - unit]).astype(float)
        ords.append(np.mean(d_ref * d_lag) / denom)
    return ScalingCurve(abscissa=delta_values, ordinate=np.asarray(ords),
                        kind=ObservableKind.VELOCITY_AUTOCORR,
                        n_paths=ensemble.spec.n_paths)


def _curve_from_per_path(ensemble, abscissa, per_path, kind) -> ScalingCurve:
    ordinate = per_path.mean(axis=0)
    n = per_path.shape[0]
    se = per_path.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else \
        np.zeros_like(ordinate)
    return ScalingCurve(abscissa=abscissa, ordinate=ordinate, kind=kind,
                        n_paths=n, std_error=se)


# -- fitting -------------------------------------------------------------

def loglog_fit(curve: ScalingCurve, window: tuple[float, float] | None = None,
               observable: str | None = None) -> FitResult:
    """OLS of ln(ordinate) on ln(abscissa) restricted to the window.

    Zero ordinates are excluded and counted; the fit fails when fewer than 3
    usable points remain or zeros exceed 20% of the window.
    """
    x = curve.abscissa
    y = curve.ordinate
    if window is None:
        window = (float(x[0]), float(x[-1]))
    lo, hi = window
    in_win = (x >= lo) & (x <= hi)
    n_window = int(np.count_nonzero(in_win))
    usable = in_win & (y > 0)
    n_zero = n_window - int(np.count_nonzero(usable))
    name = observable or curve.kind.value
    if n_window and n_zero / n_window > MAX_ZERO_FRACTION:
        raise FitError(f"{n_zero}/{n_window} window points have zero ordinate",
                       name)
    if np.count_nonzero(usable) < 3:
        raise FitError(f"fewer than 3 usable points in window [{lo:g}, {hi:g}]",
                       name)
    lx = np.log(x[usable])
    ly = np.log(y[usable])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return FitResult(slope=float(slope), intercept=float(intercept),
                     r_squared=r2, window=(float(lo), float(hi)),
                     n_points=int(np.count_nonzero(usable)),
                     n_zero_excluded=n_zero)


# -- default evaluation grids and windows --------------------------------
#
# Velocity curves: whole multiples of delta, default window starting at
# max(10h, 10*delta), relaxed to 2*delta when fewer than 3 multiples survive
# (short-horizon hyperballistic rows would otherwise have no window).
# ETAMSD: gaps in [10h, delta_max].  MSD: grid times in [3h, T]; starting
# earlier than one decade keeps the transient visible, which is what the
# reference estimates reflect.

def default_velocity_times(horizon: float, delta: float, h: float,
                           max_points: int = DEFAULT_CURVE_POINTS) -> np.ndarray:
    q_max = int(math.floor(horizon / delta))
    if q_max < 3:
        raise ValueError("horizon must cover at least 3 whole gaps")
    q_lo = max(1, int(math.ceil(max(10 * h, 10 * delta) / delta)))
    if q_max - q_lo + 1 < 3:
        q_lo = min(2, q_max - 2)
    qs = np.arange(q_lo, q_max + 1)
    if qs.size > max_points:
        pick = np.unique(np.round(np.geomspace(1, qs.size, max_points)).astype(int)) - 1
        qs = qs[pick]
    return qs * delta


def default_etamsd_gaps(delta_max: float, h: float,
                        max_points: int = DEFAULT_CURVE_POINTS) -> np.ndarray:
    lo = 10 * h
    if delta_max < 3 * lo / 10:
        raise ValueError("delta_max too small for a gap grid")
    ms = np.unique(np.round(np.geomspace(max(1, lo / h), delta_max / h,
                                         max_points)).astype(int))
    return ms * h


def default_msd_times(horizon: float, h: float,
                      max_points: int = DEFAULT_CURVE_POINTS) -> np.ndarray:
    ks = np.unique(np.round(np.geomspace(max(1, 3 / h), horizon / h,
                                         max_points)).astype(int))
    return ks * h


def estimate_exponents(ensemble: Ensemble, delta: float,
                       fit_windows: dict | None = None,
                       etamsd_gaps=None) -> ExponentReport:
    """Estimate (M, L, J, H) from one ensemble.

    M = slope(abs velocity) + 1/2
    L = (slope(sq velocity) - 2M + 2)/2   (composed with the M estimate)
    J = slope(etamsd)/2
    H = slope(msd)/2
    """
    spec = ensemble.spec
    h = spec.sampling_period
    windows = dict(fit_windows or {})

    vel_times = default_velocity_times(spec.horizon, delta, h)
    if "velocity" in windows:
        lo, hi = windows["velocity"]
        qs = np.arange(max(1, int(math.ceil(lo / delta))),
                       int(math.floor(hi / delta)) + 1)
        vel_times = qs * delta
    gaps = np.asarray(etamsd_gaps, dtype=float) if etamsd_gaps is not None \
        else default_etamsd_gaps(delta, h)
    if "etamsd" in windows and etamsd_gaps is None:
        lo, hi = windows["etamsd"]
        gaps = default_etamsd_gaps(hi, h)
        gaps = gaps[gaps >= lo]
    msd_times = default_msd_times(spec.horizon, h)

    abs_curve = abs_velocity_average(ensemble, delta, vel_times)
    sq_curve = sq_velocity_average(ensemble, delta, vel_times)
    et_curve = etamsd(ensemble, gaps)
    msd_curve = msd(ensemble, msd_times)

    fit_abs = loglog_fit(abs_curve, observable="abs_velocity")
    fit_sq = loglog_fit(sq_curve, observable="sq_velocity")
    fit_et = loglog_fit(et_curve, observable="etamsd")
    fit_msd = loglog_fit(msd_curve, observable="msd")

    moses = fit_abs.slope + 0.5
    noah = (fit_sq.slope - 2.0 * moses + 2.0) / 2.0
    joseph = fit_et.slope / 2.0
    hurst = fit_msd.slope / 2.0
    return ExponentReport(
        moses=moses, noah=noah, joseph=joseph, hurst=hurst,
        fits={"abs_velocity": fit_abs, "sq_velocity": fit_sq,
              "etamsd": fit_et, "msd": fit_msd},
    )


# -- curve persistence ---------------------------------------------------

def write_curve(curve: ScalingCurve, path) -> None:
    """Delimited text: abscissa, ordinate, n_paths, std_error columns."""
    se = curve.std_error if curve.std_error is not None \
        else np.zeros_like(curve.ordinate)
    with open(path, "w") as f:
        f.write(f"#%format: {CURVE_FORMAT} {CURVE_FORMAT_VERSION}\n")
        f.write(f"#%kind: {curve.kind.value}\n")
        f.write(f"#%n_paths: {curve.n_paths}\n")
        f.write("abscissa,ordinate,n_paths,std_error\n")
        for x, y, e in zip(curve.abscissa, curve.ordinate, se):
            f.write(f"{x:.17g},{y:.17g},{curve.n_paths},{e:.17g}\n")


def read_curve(path) -> ScalingCurve:
    header = {}
    xs, ys, es = [], [], []
    n_paths = None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line.startswith("#%"):
                key, _, value = line[2:].partition(":")
                header[key.strip()] = value.strip()
            elif line and not line.startswith("abscissa"):
                x, y, n, e = line.split(",")
                xs.append(float(x))
                ys.append(float(y))
                es.append(float(e))
                n_paths = int(n)
    kind = ObservableKind(header["kind"])
    return ScalingCurve(abscissa=np.array(xs), ordinate=np.array(ys),
                        kind=kind, n_paths=n_paths,
                        std_error=np.array(es))
