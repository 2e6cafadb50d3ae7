"""Observable averages, log-log fitting, and exponent reports."""

import math

import numpy as np
import pytest

from polyadiff import estimate, model
from polyadiff.estimate import (
    FitError,
    FitResult,
    ObservableKind,
    ScalingCurve,
    abs_velocity_average,
    default_etamsd_gaps,
    default_msd_times,
    default_velocity_times,
    estimate_exponents,
    etamsd,
    loglog_fit,
    msd,
    read_curve,
    sq_velocity_average,
    velocity_autocorrelation,
    write_curve,
)
from polyadiff.model import ModelParams
from polyadiff.simulate import Ensemble, EnsembleSpec, simulate_ensemble

UNIT = ModelParams(beta=1.0, gamma=1.0, rho=1.0)


def make_ensemble(counts, horizon=None, h=1.0, params=UNIT):
    counts = np.asarray(counts, dtype=np.int64)
    horizon = horizon if horizon is not None else (counts.shape[1] - 1) * h
    spec = EnsembleSpec(params=params, n_paths=counts.shape[0],
                        horizon=horizon, sampling_period=h, base_seed=0)
    return Ensemble(spec=spec, counts=counts)


def linear_ensemble(n_grid=101):
    """One deterministic path with exactly one event per grid step."""
    return make_ensemble(np.arange(n_grid)[None, :])


@pytest.fixture(scope="module")
def polya_ensemble():
    spec = EnsembleSpec(params=UNIT, n_paths=1000, horizon=1000.0,
                        sampling_period=1.0, base_seed=314)
    return simulate_ensemble(spec)


class TestScalingCurve:
    def test_rejects_nonincreasing_abscissa(self):
        with pytest.raises(ValueError):
            ScalingCurve(abscissa=np.array([1.0, 1.0, 2.0]),
                         ordinate=np.ones(3), kind=ObservableKind.MSD,
                         n_paths=1)

    def test_rejects_nonpositive_abscissa(self):
        with pytest.raises(ValueError):
            ScalingCurve(abscissa=np.array([0.0, 1.0, 2.0]),
                         ordinate=np.ones(3), kind=ObservableKind.MSD,
                         n_paths=1)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            ScalingCurve(abscissa=np.array([1.0, 2.0]), ordinate=np.ones(3),
                         kind=ObservableKind.MSD, n_paths=1)

    def test_rejects_nonfinite_ordinate(self):
        with pytest.raises(ValueError):
            ScalingCurve(abscissa=np.array([1.0, 2.0]),
                         ordinate=np.array([1.0, np.inf]),
                         kind=ObservableKind.MSD, n_paths=1)


class TestLoglogFit:
    def test_exact_quadratic(self):
        x = np.geomspace(1, 100, 20)
        curve = ScalingCurve(abscissa=x, ordinate=x ** 2,
                             kind=ObservableKind.MSD, n_paths=1)
        fit = loglog_fit(curve)
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant(self):
        x = np.geomspace(1, 100, 20)
        curve = ScalingCurve(abscissa=x, ordinate=np.full(20, 3.7),
                             kind=ObservableKind.ABS_VELOCITY, n_paths=1)
        assert loglog_fit(curve).slope == pytest.approx(0.0, abs=1e-12)

    def test_noisy_power_law(self):
        rng = np.random.default_rng(5)
        x = np.geomspace(1, 1e4, 50)
        y = x ** 1.5 * np.exp(rng.normal(0, 0.01, 50))
        curve = ScalingCurve(abscissa=x, ordinate=y,
                             kind=ObservableKind.MSD, n_paths=1)
        assert loglog_fit(curve).slope == pytest.approx(1.5, abs=0.02)

    def test_window_restriction(self):
        x = np.geomspace(1, 100, 30)
        y = np.where(x < 10, x, x ** 2)  # kink at x = 10
        curve = ScalingCurve(abscissa=x, ordinate=y,
                             kind=ObservableKind.MSD, n_paths=1)
        fit = loglog_fit(curve, window=(10.0, 100.0))
        assert fit.slope == pytest.approx(2.0, abs=1e-6)
        assert fit.window == (10.0, 100.0)

    def test_zero_ordinates_excluded_and_counted(self):
        x = np.geomspace(1, 100, 20)
        y = x.copy()
        y[3] = 0.0
        curve = ScalingCurve(abscissa=x, ordinate=y,
                             kind=ObservableKind.MSD, n_paths=1)
        fit = loglog_fit(curve)
        assert fit.n_zero_excluded == 1
        assert fit.n_points == 19
        assert fit.slope == pytest.approx(1.0, abs=1e-9)

    def test_too_many_zeros_fails(self):
        x = np.geomspace(1, 100, 10)
        y = x.copy()
        y[:3] = 0.0
        curve = ScalingCurve(abscissa=x, ordinate=y,
                             kind=ObservableKind.ETAMSD, n_paths=1)
        with pytest.raises(FitError, match="etamsd"):
            loglog_fit(curve)

    def test_too_few_points_fails(self):
        x = np.geomspace(1, 100, 10)
        curve = ScalingCurve(abscissa=x, ordinate=x,
                             kind=ObservableKind.MSD, n_paths=1)
        with pytest.raises(FitError, match="usable points"):
            loglog_fit(curve, window=(200.0, 300.0))


class TestDeterministicPaths:
    def test_constant_path_yields_zero_curves(self):
        ens = make_ensemble(np.zeros((1, 101), dtype=np.int64))
        times = np.array([10.0, 20.0, 50.0, 100.0])
        assert np.all(abs_velocity_average(ens, 10.0, times[:-1] * 0 + times[:3]).ordinate == 0)
        assert np.all(sq_velocity_average(ens, 10.0, times[:3]).ordinate == 0)
        assert np.all(etamsd(ens, [5.0, 10.0]).ordinate == 0)
        assert np.all(msd(ens, times).ordinate == 0)

    def test_linear_path_abs_velocity_is_one(self):
        ens = linear_ensemble()
        curve = abs_velocity_average(ens, 10.0, [10.0, 50.0, 100.0])
        assert np.allclose(curve.ordinate, 1.0)

    def test_linear_path_etamsd_slope_two(self):
        ens = linear_ensemble()
        curve = etamsd(ens, [1.0, 2.0, 5.0, 10.0, 20.0, 50.0])
        assert np.allclose(curve.ordinate, curve.abscissa ** 2)
        assert loglog_fit(curve).slope == pytest.approx(2.0, abs=1e-12)

    def test_linear_path_msd_slope_two(self):
        ens = linear_ensemble()
        curve = msd(ens, [1.0, 10.0, 100.0])
        assert loglog_fit(curve).slope == pytest.approx(2.0, abs=1e-12)

    def test_rejects_partial_windows(self):
        ens = linear_ensemble()
        with pytest.raises(ValueError, match="multiple of delta"):
            abs_velocity_average(ens, 10.0, [15.0])

    def test_rejects_delta_off_grid(self):
        ens = linear_ensemble()
        with pytest.raises(ValueError, match="multiple of h"):
            sq_velocity_average(ens, 2.5, [5.0])

    def test_rejects_etamsd_gap_beyond_half_horizon(self):
        ens = linear_ensemble()
        with pytest.raises(ValueError, match="T/2"):
            etamsd(ens, [60.0])

    def test_msd_rejects_off_grid_times(self):
        ens = linear_ensemble()
        with pytest.raises(ValueError, match="grid"):
            msd(ens, [1.5])


class TestMonteCarloOracles:
    def test_abs_velocity_matches_telescoped_mean(self, polya_ensemble):
        # the ensemble expectation of the curve is mean(t)/t exactly
        times = np.array([100.0, 200.0, 500.0, 1000.0])
        curve = abs_velocity_average(polya_ensemble, 100.0, times)
        exact = model.mean(UNIT, times) / times
        assert np.all(np.abs(curve.ordinate - exact) < 3 * curve.std_error)

    def test_abs_velocity_slope_is_flat_for_polya(self, polya_ensemble):
        times = default_velocity_times(1000.0, 100.0, 1.0)
        curve = abs_velocity_average(polya_ensemble, 100.0, times)
        assert loglog_fit(curve).slope == pytest.approx(0.0, abs=0.05)

    def test_sq_velocity_matches_closed_form_sum(self, polya_ensemble):
        delta = 100.0
        times = np.array([200.0, 500.0, 1000.0])
        curve = sq_velocity_average(polya_ensemble, delta, times)
        edges = np.arange(0, 11) * delta
        e2 = (model.increment_variance(UNIT, edges[:-1], edges[1:])
              + model.increment_mean(UNIT, edges[:-1], edges[1:]) ** 2)
        cums = np.cumsum(e2)
        exact = cums[(times / delta).astype(int) - 1] / (times * delta)
        assert np.all(np.abs(curve.ordinate - exact) < 3 * curve.std_error)

    def test_msd_matches_second_moment(self, polya_ensemble):
        times = np.array([10.0, 100.0, 1000.0])
        curve = msd(polya_ensemble, times)
        exact = model.variance(UNIT, times) + model.mean(UNIT, times) ** 2
        assert np.all(np.abs(curve.ordinate - exact) < 3 * curve.std_error)

    def test_etamsd_equals_sq_velocity_at_unit_gap(self, polya_ensemble):
        h = polya_ensemble.spec.sampling_period
        et = etamsd(polya_ensemble, [h])
        sq = sq_velocity_average(polya_ensemble, h,
                                 [polya_ensemble.spec.horizon])
        assert et.ordinate[0] == pytest.approx(sq.ordinate[0] * h * h,
                                               rel=1e-12)


@pytest.fixture(scope="module")
def wide_ensemble():
    spec = EnsembleSpec(params=UNIT, n_paths=8000, horizon=1100.0,
                        sampling_period=1.0, base_seed=2718)
    return simulate_ensemble(spec)


class TestVelocityAutocorrelation:
    def test_flat_slope_for_polya(self, wide_ensemble):
        gaps = np.geomspace(10, 1000, 12).round()
        curve = velocity_autocorrelation(wide_ensemble, 50.0, gaps)
        assert loglog_fit(curve).slope == pytest.approx(0.0, abs=0.1)

    def test_matches_joint_law_moments(self, wide_ensemble):
        t = 50.0
        counts = wide_ensemble.counts
        d_ref = (counts[:, 50] - counts[:, 49]).astype(float)
        for gap in (10.0, 20.0):
            curve = velocity_autocorrelation(wide_ensemble, t, [gap])
            cov = float(model.increment_covariance(
                UNIT, t - 1, t, t - 1 + gap, t + gap))
            m1 = float(model.increment_mean(UNIT, t - 1, t))
            m2 = float(model.increment_mean(UNIT, t - 1 + gap, t + gap))
            denom = float(model.increment_variance(UNIT, t - 1, t)) + m1 * m1
            analytic = (cov + m1 * m2) / denom
            # empirical standard error of the product-mean estimator
            d_lag = (counts[:, 50 + int(gap)]
                     - counts[:, 49 + int(gap)]).astype(float)
            prod = d_ref * d_lag
            se = prod.std(ddof=1) / math.sqrt(prod.size) / denom
            assert abs(curve.ordinate[0] - analytic) < 4 * se + 1e-12

    def test_rejects_small_t(self, wide_ensemble):
        with pytest.raises(ValueError):
            velocity_autocorrelation(wide_ensemble, 0.5, [10.0])


class TestDefaultGrids:
    def test_velocity_times_are_multiples(self):
        times = default_velocity_times(1e4, 100.0, 1.0)
        assert np.all(np.mod(times, 100.0) == 0)
        assert times[0] >= 1000.0 and times[-1] <= 1e4
        assert times.size <= estimate.DEFAULT_CURVE_POINTS

    def test_velocity_times_relaxed_when_sparse(self):
        # only 10 whole gaps fit: the first-decade cutoff would leave 1 point
        times = default_velocity_times(1000.0, 100.0, 1.0)
        assert times.size >= 3
        assert times[0] == 200.0

    def test_etamsd_gaps_span_decades(self):
        gaps = default_etamsd_gaps(1000.0, 1.0)
        assert gaps[0] == 10.0 and gaps[-1] == 1000.0

    def test_msd_times_cover_horizon(self):
        times = default_msd_times(1e4, 1.0)
        assert times[0] == 3.0 and times[-1] == 1e4


class TestEstimateExponents:
    def test_reduced_polya_run(self):
        spec = EnsembleSpec(params=UNIT, n_paths=200, horizon=1000.0,
                            sampling_period=1.0, base_seed=1618)
        ens = simulate_ensemble(spec)
        report = estimate_exponents(ens, 100.0)
        assert report.hurst == pytest.approx(1.0, abs=0.05)
        assert report.moses == pytest.approx(0.5, abs=0.07)
        assert report.noah == pytest.approx(0.5, abs=0.07)
        assert report.joseph == pytest.approx(1.0, abs=0.05)
        assert not report.relation_flagged
        assert set(report.fits) == {"abs_velocity", "sq_velocity",
                                    "etamsd", "msd"}

    def test_relation_flag_threshold(self):
        report = estimate.ExponentReport(moses=0.5, noah=0.5, joseph=1.0,
                                         hurst=1.2)
        assert report.relation_residual == pytest.approx(0.2)
        assert report.relation_flagged
        ok = estimate.ExponentReport(moses=0.5, noah=0.5, joseph=1.0,
                                     hurst=1.05)
        assert not ok.relation_flagged

    def test_fit_failure_names_observable(self):
        ens = make_ensemble(np.zeros((2, 101), dtype=np.int64))
        with pytest.raises(FitError, match="velocity|etamsd|msd"):
            estimate_exponents(ens, 10.0)


class TestCurvePersistence:
    def test_round_trip(self, tmp_path):
        x = np.geomspace(1, 100, 15)
        curve = ScalingCurve(abscissa=x, ordinate=x ** 1.3,
                             kind=ObservableKind.ETAMSD, n_paths=42,
                             std_error=0.01 * x)
        f = tmp_path / "curve.csv"
        write_curve(curve, f)
        back = read_curve(f)
        assert back.kind is ObservableKind.ETAMSD
        assert back.n_paths == 42
        np.testing.assert_allclose(back.abscissa, curve.abscissa, rtol=0)
        np.testing.assert_allclose(back.ordinate, curve.ordinate, rtol=0)
        np.testing.assert_allclose(back.std_error, curve.std_error, rtol=0)

    def test_byte_identical_rewrites(self, tmp_path):
        x = np.geomspace(1, 10, 5)
        curve = ScalingCurve(abscissa=x, ordinate=np.sqrt(x),
                             kind=ObservableKind.MSD, n_paths=3)
        f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_curve(curve, f1)
        write_curve(curve, f2)
        assert f1.read_bytes() == f2.read_bytes()
