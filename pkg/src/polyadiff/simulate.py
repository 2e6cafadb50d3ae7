"""Exact event-driven sampling of trajectories and reproducible ensembles.

The next-event time in state n at time s has survival function
S(t) = ((1+rho s)/(1+rho t))^((beta+gamma n)/rho), which inverts in closed
form.  In log-time coordinates y = ln(1+rho t) the event epochs are a
cumulative sum of independent exponentials scaled by rho/(beta+gamma n),
which is what :func:`simulate_trajectory` exploits to vectorize generation.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, mean, variance

__all__ = [
    "Trajectory",
    "SampledPath",
    "EnsembleSpec",
    "Ensemble",
    "CapacityError",
    "sample_waiting_time",
    "simulate_trajectory",
    "resample_to_grid",
    "simulate_ensemble",
    "path_rng",
    "write_ensemble",
    "read_ensemble",
    "write_event_times",
]

DEFAULT_EVENT_CAP = 100_000_000

ENSEMBLE_FORMAT = "gpp-ensemble"
ENSEMBLE_FORMAT_VERSION = 1


class CapacityError(RuntimeError):
    """Raised when a trajectory exceeds the configured event cap."""

    def __init__(self, cap: int, path_index: int | None = None):
        self.cap = cap
        self.path_index = path_index
        where = "" if path_index is None else f" (path {path_index})"
        super().__init__(
            f"event count exceeded the cap of {cap}{where}; "
            "the horizon is too long for this parameter regime"
        )


@dataclass(frozen=True)
class Trajectory:
    """Event (jump) times of one realization, right-censored at `horizon`."""

    params: ModelParams
    event_times: np.ndarray
    horizon: float
    seed: int

    def __post_init__(self):
        ev = np.asarray(self.event_times, dtype=float)
        if ev.size and (np.any(np.diff(ev) <= 0) or ev[0] <= 0):
            raise ValueError("event times must be strictly increasing and positive")
        if ev.size and ev[-1] > self.horizon:
            raise ValueError("event times must not exceed the horizon")
        object.__setattr__(self, "event_times", ev)


@dataclass(frozen=True)
class SampledPath:
    """Counts X(k*h) on the grid k = 0 .. floor(T/h)."""

    counts: np.ndarray
    sampling_period: float

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.size == 0 or c[0] != 0 or np.any(np.diff(c) < 0):
            raise ValueError("counts must start at 0 and be nondecreasing")


@dataclass(frozen=True)
class EnsembleSpec:
    params: ModelParams
    n_paths: int
    horizon: float
    sampling_period: float
    base_seed: int

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.sampling_period <= 0:
            raise ValueError("sampling_period must be > 0")
        if self.horizon < self.sampling_period:
            raise ValueError("horizon must be >= sampling_period")

    @property
    def n_grid(self) -> int:
        return int(math.floor(self.horizon / self.sampling_period)) + 1

    @property
    def grid_times(self) -> np.ndarray:
        return np.arange(self.n_grid) * self.sampling_period


@dataclass(frozen=True)
class Ensemble:
    """N sampled paths on a common grid; counts has shape (N, n_grid)."""

    spec: EnsembleSpec
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (self.spec.n_paths, self.spec.n_grid):
            raise ValueError(
                f"counts shape {c.shape} does not match spec "
                f"({self.spec.n_paths}, {self.spec.n_grid})"
            )

    @property
    def grid_times(self) -> np.ndarray:
        return self.spec.grid_times


def sample_waiting_time(params: ModelParams, n: int, s: float, u: float) -> float:
    """Inverse-transform next event time from state n at time s, u in (0, 1].

    t = ((1 + rho s) u^(-rho/(beta+gamma n)) - 1)/rho, the exact inverse of
    the closed-form survival function.
    """
    if not 0.0 < u <= 1.0:
        raise ValueError("u must be in (0, 1]")
    if s < 0 or n < 0:
        raise ValueError("require s >= 0 and n >= 0")
    rho = params.rho
    expo = -rho / (params.beta + params.gamma * n)
    return ((1.0 + rho * s) * u ** expo - 1.0) / rho


def path_rng(base_seed: int, path_index: int) -> np.random.Generator:
    """Independent per-path stream; deterministic in (base_seed, path_index).

    Spawn-key derivation keeps streams identical no matter how paths are
    distributed over workers.
    """
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(base_seed, spawn_key=(path_index,)))
    )


def _draw_log_gaps(rng: np.random.Generator, params: ModelParams,
                   start_state: int, count: int) -> np.ndarray:
    """Scaled exponential gaps of y = ln(1+rho t) for the next `count` events."""
    # u in (0,1] so that the zero-probability u=0 draw can never occur
    u = 1.0 - rng.random(count)
    states = start_state + np.arange(count)
    scales = params.rho / (params.beta + params.gamma * states)
    return -scales * np.log(u)


def _expected_events(params: ModelParams, horizon: float) -> int:
    m = float(mean(params, horizon))
    sd = math.sqrt(float(variance(params, horizon)))
    return int(m + 10.0 * sd) + 64


def _generate_log_epochs(rng: np.random.Generator, params: ModelParams,
                         horizon: float, event_cap: int,
                         path_index: int | None) -> np.ndarray:
    """Event epochs in log-time y = ln(1+rho t), all <= ln(1+rho*horizon)."""
    y_end = math.log1p(params.rho * horizon)
    # bounded block size keeps memory flat even when the cap is about to trip
    block = min(_expected_events(params, horizon), event_cap + 1, 1 << 22)
    ys = np.empty(0)
    y_last = 0.0
    n_events = 0
    while True:
        if n_events > event_cap:
            raise CapacityError(event_cap, path_index)
        gaps = _draw_log_gaps(rng, params, n_events, block)
        chunk = y_last + np.cumsum(gaps)
        over = int(np.searchsorted(chunk, y_end, side="right"))
        ys = np.concatenate([ys, chunk[:over]])
        n_events += over
        if over < chunk.size:
            break
        y_last = float(chunk[-1])
        block = max(block // 2, 1024)
    if n_events > event_cap:
        raise CapacityError(event_cap, path_index)
    return ys


def simulate_trajectory(params: ModelParams, horizon: float, seed: int,
                        event_cap: int = DEFAULT_EVENT_CAP,
                        _path_index: int | None = None) -> Trajectory:
    """Generate one trajectory on [0, horizon], right-censored at the horizon.

    Equivalent to iterating :func:`sample_waiting_time` from (n=0, s=0) on
    the same uniform stream, but vectorized through the log-time
    representation.  Deterministic given (params, horizon, seed).
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    rng = path_rng(seed, _path_index) if _path_index is not None else \
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    ys = _generate_log_epochs(rng, params, horizon, event_cap, _path_index)
    event_times = np.expm1(ys) / params.rho
    # guard against round-off pushing the last event past the horizon
    np.minimum(event_times, horizon, out=event_times)
    return Trajectory(params=params, event_times=event_times,
                      horizon=horizon, seed=seed)


def resample_to_grid(traj: Trajectory, h: float) -> SampledPath:
    """Counts at k*h for k = 0 .. floor(T/h); an event at exactly k*h counts."""
    if h <= 0 or h > traj.horizon:
        raise ValueError("require 0 < h <= horizon")
    grid = np.arange(int(math.floor(traj.horizon / h)) + 1) * h
    counts = np.searchsorted(traj.event_times, grid, side="right")
    return SampledPath(counts=counts.astype(np.int64), sampling_period=h)


def _simulate_one_path(spec: EnsembleSpec, i: int, event_cap: int) -> np.ndarray:
    rng = path_rng(spec.base_seed, i)
    ys = _generate_log_epochs(rng, spec.params, spec.horizon, event_cap, i)
    event_times = np.expm1(ys) / spec.params.rho
    np.minimum(event_times, spec.horizon, out=event_times)
    return np.searchsorted(event_times, spec.grid_times,
                           side="right").astype(np.int64)


def _simulate_chunk(spec: EnsembleSpec, indices: list[int], event_cap: int):
    return [(i, _simulate_one_path(spec, i, event_cap)) for i in indices]


def simulate_ensemble(spec: EnsembleSpec,
                      event_cap: int = DEFAULT_EVENT_CAP,
                      n_workers: int = 1) -> Ensemble:
    """Generate all paths of the spec; bit-identical for any n_workers.

    Path i always uses the stream derived from (base_seed, i), so the result
    does not depend on execution order or the degree of parallelism.
    """
    counts = np.empty((spec.n_paths, spec.n_grid), dtype=np.int64)
    if n_workers <= 1 or spec.n_paths == 1:
        for i in range(spec.n_paths):
            counts[i] = _simulate_one_path(spec, i, event_cap)
    else:
        chunks = [list(range(w, spec.n_paths, n_workers)) for w in range(n_workers)]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_simulate_chunk, spec, c, event_cap)
                       for c in chunks if c]
            for fut in futures:
                for i, row in fut.result():
                    counts[i] = row
    return Ensemble(spec=spec, counts=counts)


# -- persistence ---------------------------------------------------------
#
# Delimited-text format, one file per ensemble:
#   line 1:  "#%format: gpp-ensemble 1"
#   header:  "#%<field>: <value>" for every EnsembleSpec field
#            (floats as repr, round-trippable)
#   body:    one line per path, space-separated grid counts
# Writing is deterministic, so identical specs produce identical bytes.

def write_ensemble(ensemble: Ensemble, path) -> None:
    spec = ensemble.spec
    with open(path, "w") as f:
        f.write(f"#%format: {ENSEMBLE_FORMAT} {ENSEMBLE_FORMAT_VERSION}\n")
        f.write(f"#%beta: {spec.params.beta!r}\n")
        f.write(f"#%gamma: {spec.params.gamma!r}\n")
        f.write(f"#%rho: {spec.params.rho!r}\n")
        f.write(f"#%n_paths: {spec.n_paths}\n")
        f.write(f"#%horizon: {spec.horizon!r}\n")
        f.write(f"#%sampling_period: {spec.sampling_period!r}\n")
        f.write(f"#%base_seed: {spec.base_seed}\n")
        for row in ensemble.counts:
            f.write(" ".join(map(str, row)))
            f.write("\n")


class EnsembleFormatError(ValueError):
    """Raised when an ensemble file violates the documented layout."""


def read_ensemble(path) -> Ensemble:
    header: dict[str, str] = {}
    rows = []
    with open(path) as f:
        first = f.readline().rstrip("\n")
        expected = f"#%format: {ENSEMBLE_FORMAT} {ENSEMBLE_FORMAT_VERSION}"
        if first != expected:
            raise EnsembleFormatError(
                f"bad format line: {first!r} (expected {expected!r})"
            )
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("#%"):
                key, _, value = line[2:].partition(":")
                header[key.strip()] = value.strip()
            elif line:
                rows.append(np.array(line.split(), dtype=np.int64))
    missing = {"beta", "gamma", "rho", "n_paths", "horizon",
               "sampling_period", "base_seed"} - set(header)
    if missing:
        raise EnsembleFormatError(f"missing header fields: {sorted(missing)}")
    spec = EnsembleSpec(
        params=ModelParams(beta=float(header["beta"]),
                           gamma=float(header["gamma"]),
                           rho=float(header["rho"])),
        n_paths=int(header["n_paths"]),
        horizon=float(header["horizon"]),
        sampling_period=float(header["sampling_period"]),
        base_seed=int(header["base_seed"]),
    )
    if len(rows) != spec.n_paths:
        raise EnsembleFormatError(
            f"expected {spec.n_paths} count rows, found {len(rows)}"
        )
    counts = np.vstack(rows)
    return Ensemble(spec=spec, counts=counts)


def write_event_times(trajectories: list[Trajectory], path) -> None:
    """Optional raw event-times file: one line of times per path."""
    with open(path, "w") as f:
        f.write(f"#%format: gpp-event-times {ENSEMBLE_FORMAT_VERSION}\n")
        for traj in trajectories:
            f.write(" ".join(f"{t:.17g}" for t in traj.event_times))
            f.write("\n")
