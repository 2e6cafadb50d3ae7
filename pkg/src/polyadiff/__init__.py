"""Contagious birth-process diffusion toolkit.

A three-parameter counting process whose event rate grows linearly with the
running count and relaxes hyperbolically in time.  The package provides the
exact displacement laws and moments, exact event-driven path sampling, and
the Moses/Noah/Joseph/Hurst scaling-exponent estimation pipeline.
"""

from .model import (
    ModelParams,
    OmoriRelaxation,
    QuadratureRelaxation,
    Regime,
    TheoreticalExponents,
    autocorrelation,
    autocorrelation_limit,
    classify_regime,
    covariance,
    cumulative_intensity,
    event_rate,
    excess_kurtosis,
    increment_covariance,
    increment_mean,
    increment_pmf,
    increment_variance,
    joint_increment_pmf,
    joint_increment_probs,
    mean,
    pmf_moment,
    theoretical_exponents,
    transition_pmf,
    variance,
    waiting_time_density,
    waiting_time_survival,
    waiting_time_tail_exponent,
)
from .simulate import (
    CapacityError,
    Ensemble,
    EnsembleFormatError,
    EnsembleSpec,
    SampledPath,
    Trajectory,
    path_rng,
    read_ensemble,
    resample_to_grid,
    sample_waiting_time,
    simulate_ensemble,
    simulate_trajectory,
    write_ensemble,
)
from .estimate import (
    ExponentReport,
    FitError,
    FitResult,
    ScalingCurve,
    abs_velocity_average,
    estimate_exponents,
    etamsd,
    loglog_fit,
    msd,
    read_curve,
    sq_velocity_average,
    velocity_autocorrelation,
    write_curve,
)
from .experiment import (
    ComparisonReport,
    ExperimentConfig,
    ExperimentRow,
    ResultsTable,
    compare_to_reference,
    default_config,
    emit_figure_data,
    load_config,
    reference_table,
    run_experiment,
    save_config,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
