"""Closed-form distributions, moments and exponents of the contagious
birth process with Omori-type time damping.

The process counts unit jumps with event rate (beta + gamma*n) * kappa(t),
kappa(t) = 1/(1 + rho*t).  Everything in this module is analytic; the
simulation and estimation layers are validated against these formulas.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gammaln

__all__ = [
    "ModelParams",
    "OmoriRelaxation",
    "QuadratureRelaxation",
    "Regime",
    "TheoreticalExponents",
    "event_rate",
    "cumulative_intensity",
    "transition_pmf",
    "transition_log_pmf",
    "mean",
    "covariance",
    "variance",
    "autocorrelation",
    "autocorrelation_limit",
    "excess_kurtosis",
    "increment_pmf",
    "increment_log_pmf",
    "increment_mean",
    "increment_variance",
    "joint_increment_pmf",
    "joint_increment_log_pmf",
    "joint_increment_probs",
    "increment_covariance",
    "theoretical_exponents",
    "waiting_time_tail_exponent",
    "waiting_time_density",
    "waiting_time_survival",
    "classify_regime",
    "pmf_moment",
]

#: Relative tolerance used when deciding whether gamma/rho sits exactly on a
#: regime boundary (1/2 or 1).
REGIME_BOUNDARY_RTOL = 1e-12

#: Tail-truncation policy for numeric moments of the discrete laws: stop once
#: cumulative mass >= 1 - TAIL_MASS and the current term is negligible.
TAIL_MASS = 1e-12
TAIL_TERM_RTOL = 1e-15


@dataclass(frozen=True)
class ModelParams:
    """The (beta, gamma, rho) triple. All three must be strictly positive.

    beta   baseline event rate weight (dimensionless)
    gamma  state-coupling (contagion) strength
    rho    time-damping rate, 1/time
    """

    beta: float
    gamma: float
    rho: float

    def __post_init__(self):
        for name in ("beta", "gamma", "rho"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a finite positive real, got {v!r}")

    def hurst(self) -> float:
        """The ratio gamma/rho, which sets the diffusion regime."""
        return self.gamma / self.rho

    @property
    def shape(self) -> float:
        """beta/gamma, the shape parameter of the counting distributions."""
        return self.beta / self.gamma


class OmoriRelaxation:
    """kappa(t) = 1/(1 + rho*t) with closed-form cumulative integral."""

    def __init__(self, rho: float):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.rho = rho

    def kappa(self, t):
        return 1.0 / (1.0 + self.rho * np.asarray(t, dtype=float))

    def cumulative(self, s, t):
        """K(s, t) = (1/rho) * ln((1 + rho t)/(1 + rho s))."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(s < 0) or np.any(t < s):
            raise ValueError("require 0 <= s <= t")
        return (np.log1p(self.rho * t) - np.log1p(self.rho * s)) / self.rho


class QuadratureRelaxation:
    """Numeric fallback for a user-supplied integrable kappa(t) >= 0."""

    def __init__(self, kappa: Callable[[float], float], abs_tol: float = 1e-10):
        self._kappa = kappa
        self.abs_tol = abs_tol

    def kappa(self, t):
        return self._kappa(t)

    def cumulative(self, s: float, t: float) -> float:
        if s < 0 or t < s:
            raise ValueError("require 0 <= s <= t")
        value, _ = integrate.quad(self._kappa, s, t, epsabs=self.abs_tol)
        return value


class Regime(enum.Enum):
    SUBDIFFUSION = "subdiffusion"
    BROWNIAN_NON_GAUSSIAN = "brownian-non-gaussian"
    SUPERDIFFUSION = "superdiffusion"
    BALLISTIC = "ballistic"
    HYPERBALLISTIC = "hyperballistic"


@dataclass(frozen=True)
class TheoreticalExponents:
    moses: float
    noah: float
    joseph: float
    hurst: float


# -- intensity -----------------------------------------------------------

def event_rate(params: ModelParams, n: int, t: float) -> float:
    """Event rate (beta + gamma*n) / (1 + rho*t) in state n at time t."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if n < 0:
        raise ValueError("n must be >= 0")
    return (params.beta + params.gamma * n) / (1.0 + params.rho * t)


def cumulative_intensity(params: ModelParams, s, t):
    """Integral of the relaxation function over [s, t]."""
    return OmoriRelaxation(params.rho).cumulative(s, t)


def _growth(params: ModelParams, t):
    """(1 + rho t)^(gamma/rho) = exp(gamma * K(0, t)), vectorized."""
    return np.exp(params.hurst() * np.log1p(params.rho * np.asarray(t, dtype=float)))


# -- transition law ------------------------------------------------------

def transition_log_pmf(params: ModelParams, k: int, n, s: float, t: float):
    """Log probability of n new events on (s, t] given k events by time s.

    Stable for large n and non-integer beta/gamma: the Gamma-function ratio
    is evaluated through log-gamma differences.
    """
    if s < 0 or t < s:
        raise ValueError("require 0 <= s <= t")
    if k < 0:
        raise ValueError("k must be >= 0")
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("n must be >= 0")
    r = params.shape + k
    gk = params.gamma * cumulative_intensity(params, s, t)
    if gk == 0.0:
        return np.where(n == 0, 0.0, -np.inf)
    # log(1 - e^{-gk}) without cancellation
    log_q = np.log(-np.expm1(-gk))
    out = (
        gammaln(r + n)
        - gammaln(r)
        - gammaln(n + 1.0)
        - r * gk
        + n * log_q
    )
    return out


def transition_pmf(params: ModelParams, k: int, n, s: float, t: float):
    return np.exp(transition_log_pmf(params, k, n, s, t))


# -- moments -------------------------------------------------------------

def mean(params: ModelParams, t):
    """E[X(t)] = (beta/gamma) [(1 + rho t)^(gamma/rho) - 1]."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return params.shape * np.expm1(params.hurst() * np.log1p(params.rho * t))


def covariance(params: ModelParams, s, t):
    """Cov[X(s), X(t)] for s <= t."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < s):
        raise ValueError("require 0 <= s <= t")
    return params.shape * _growth(params, t) * (_growth(params, s) - 1.0)


def variance(params: ModelParams, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    g = _growth(params, t)
    return params.shape * g * (g - 1.0)


def autocorrelation(params: ModelParams, s, t):
    """Corr[X(s), X(t)], 0 < s <= t."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be > 0 (variance vanishes at 0)")
    if np.any(t < s):
        raise ValueError("require s <= t")
    gs = _growth(params, s)
    gt = _growth(params, t)
    return np.sqrt((gs - 1.0) / gs) * np.sqrt(gt / (gt - 1.0))


def autocorrelation_limit(params: ModelParams, s):
    """Limit of the autocorrelation as t -> infinity: sqrt(1 - (1+rho s)^(-gamma/rho))."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be > 0")
    return np.sqrt(-np.expm1(-params.hurst() * np.log1p(params.rho * s)))


def excess_kurtosis(params: ModelParams, t):
    """Excess kurtosis of X(t); always > 6*gamma/beta."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be > 0")
    gk = params.gamma * cumulative_intensity(params, 0.0, t)
    return (params.gamma / params.beta) * (6.0 + np.exp(-gk) / np.expm1(gk))


# -- increments ----------------------------------------------------------

def increment_log_pmf(params: ModelParams, n, s: float, t: float):
    """Log probability of the displacement X(t) - X(s) = n, 0 <= s < t.

    The law depends on both s and t (not only t - s): a negative binomial
    whose success probability mixes K(s, t) and K(0, t).
    """
    if s < 0 or t <= s:
        raise ValueError("require 0 <= s < t")
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("n must be >= 0")
    r = params.shape
    gk_st = params.gamma * cumulative_intensity(params, s, t)
    gk_0t = params.gamma * cumulative_intensity(params, 0.0, t)
    one_minus_e = -math.expm1(-gk_st)        # 1 - e^{-gamma K(s,t)}
    e_0t = math.exp(-gk_0t)
    denom = one_minus_e + e_0t
    return (
        gammaln(r + n)
        - gammaln(r)
        - gammaln(n + 1.0)
        + n * (math.log(one_minus_e) - math.log(denom))
        + r * (-gk_0t - math.log(denom))
    )


def increment_pmf(params: ModelParams, n, s: float, t: float):
    return np.exp(increment_log_pmf(params, n, s, t))


def increment_mean(params: ModelParams, s, t):
    """E[X(t) - X(s)] = mean(t) - mean(s)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < s):
        raise ValueError("require 0 <= s <= t")
    return params.shape * (_growth(params, t) - _growth(params, s))


def increment_variance(params: ModelParams, s, t):
    """Var[X(t) - X(s)] = (beta/gamma) (a^2 + a) with a the growth difference."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < s):
        raise ValueError("require 0 <= s <= t")
    a = _growth(params, t) - _growth(params, s)
    return params.shape * (a * a + a)


def joint_increment_probs(params: ModelParams, s1, t1, s2, t2):
    """(p0, p1, p2) of the negative multinomial law of two disjoint increments.

    Requires 0 <= s1 < t1 <= s2 < t2.  p0 + p1 + p2 = 1.  Counts over the
    unobserved intervals (0, s1] and (t1, s2] are marginalized out; negative
    multinomials are closed under this, so the pair law keeps the same form
    with renormalized cell probabilities.  The result reproduces the exact
    process covariance (beta/gamma) * (growth difference 1) * (growth
    difference 2) for any placement of the two intervals.
    """
    if not (0 <= s1 < t1 <= s2 < t2):
        raise ValueError("require 0 <= s1 < t1 <= s2 < t2 (disjoint ordered intervals)")
    h = params.hurst()

    def pw(num, den):
        return math.exp(h * (math.log1p(params.rho * num) - math.log1p(params.rho * den)))

    a = pw(0.0, s1)       # (1/(1+rho s1))^{gamma/rho}
    b = pw(s1, t1)        # ((1+rho s1)/(1+rho t1))^{gamma/rho}
    d = pw(t1, s2)        # ((1+rho t1)/(1+rho s2))^{gamma/rho}, gap factor
    c = pw(s2, t2)        # ((1+rho s2)/(1+rho t2))^{gamma/rho}
    norm = 1.0 - (1.0 - a) * b * d * c   # marginalizes the count on (0, s1]
    w0 = a * b * d * c / norm
    w1 = (1.0 - b) * d * c / norm
    w_gap = (1.0 - d) * c / norm         # cell for the count on (t1, s2]
    w2 = (1.0 - c) / norm
    keep = 1.0 - w_gap
    return w0 / keep, w1 / keep, w2 / keep


def joint_increment_log_pmf(params: ModelParams, n1, n2, s1, t1, s2, t2):
    """Log P[delta(s1,t1) = n1, delta(s2,t2) = n2] (negative multinomial)."""
    n1 = np.asarray(n1)
    n2 = np.asarray(n2)
    if np.any(n1 < 0) or np.any(n2 < 0):
        raise ValueError("counts must be >= 0")
    p0, p1, p2 = joint_increment_probs(params, s1, t1, s2, t2)
    r = params.shape
    return (
        gammaln(r + n1 + n2)
        - gammaln(r)
        - gammaln(n1 + 1.0)
        - gammaln(n2 + 1.0)
        + r * math.log(p0)
        + n1 * math.log(p1)
        + n2 * math.log(p2)
    )


def joint_increment_pmf(params: ModelParams, n1, n2, s1, t1, s2, t2):
    return np.exp(joint_increment_log_pmf(params, n1, n2, s1, t1, s2, t2))


def increment_covariance(params: ModelParams, s1, t1, s2, t2):
    """Cov of two disjoint increments: (beta/gamma) p1 p2 / p0^2."""
    p0, p1, p2 = joint_increment_probs(params, s1, t1, s2, t2)
    return params.shape * p1 * p2 / (p0 * p0)


# -- exponents and regimes ----------------------------------------------

def theoretical_exponents(params: ModelParams) -> TheoreticalExponents:
    """Exact Moses/Noah/Joseph/Hurst values; satisfies H = M + L + J - 1."""
    h = params.hurst()
    return TheoreticalExponents(moses=h - 0.5, noah=0.5, joseph=1.0, hurst=h)


def waiting_time_tail_exponent(params: ModelParams, n: int) -> float:
    """alpha_n = (beta + gamma n)/rho; the sojourn density decays as t^-(1+alpha_n)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return (params.beta + params.gamma * n) / params.rho


def waiting_time_survival(params: ModelParams, n: int, s: float, t):
    """P[no event on (s, t] | state n at time s]."""
    t = np.asarray(t, dtype=float)
    if s < 0 or np.any(t < s):
        raise ValueError("require 0 <= s <= t")
    alpha = waiting_time_tail_exponent(params, n)
    return np.exp(alpha * (np.log1p(params.rho * s) - np.log1p(params.rho * t)))


def waiting_time_density(params: ModelParams, n: int, s: float, t):
    """Density of the next event time given state n at time s."""
    t = np.asarray(t, dtype=float)
    rate = (params.beta + params.gamma * n) / (1.0 + params.rho * t)
    return rate * waiting_time_survival(params, n, s, t)


def classify_regime(params: ModelParams) -> Regime:
    """Total classification of gamma/rho; boundaries matched to 1e-12 relative."""
    h = params.hurst()
    if math.isclose(h, 0.5, rel_tol=REGIME_BOUNDARY_RTOL):
        return Regime.BROWNIAN_NON_GAUSSIAN
    if math.isclose(h, 1.0, rel_tol=REGIME_BOUNDARY_RTOL):
        return Regime.BALLISTIC
    if h < 0.5:
        return Regime.SUBDIFFUSION
    if h < 1.0:
        return Regime.SUPERDIFFUSION
    return Regime.HYPERBALLISTIC


# -- numeric helpers -----------------------------------------------------

def pmf_moment(log_pmf: Callable[[int], float], order: int = 1,
               max_terms: int = 10_000_000) -> float:
    """Tail-truncated sum of n^order * pmf(n) for a discrete law on n >= 0.

    Truncation: cumulative mass >= 1 - 1e-12 and current term below
    1e-15 of the running moment sum.
    """
    total_mass = 0.0
    moment = 0.0
    n = 0
    while n < max_terms:
        p = math.exp(log_pmf(n))
        total_mass += p
        term = (n ** order) * p
        moment += term
        if total_mass >= 1.0 - TAIL_MASS and term < TAIL_TERM_RTOL * max(moment, 1e-300):
            return moment
        n += 1
    raise RuntimeError("moment sum did not converge within max_terms")
