"""Intraday updating of probabilistic day-ahead forecasts.

A day-ahead forecast for a daily horizon of T steps is represented as a
Gaussian mixture over the full day.  As the day unfolds and the first
``t_prime`` steps are observed, the forecast is updated in closed form:
component weights are re-weighted by how well each component explains the
observations, and each component is conditioned on them, yielding an exact
mixture over the remaining steps — no retraining, no approximation.

The package also ships ensemble sampling with reproducible per-trace
substreams, a paired evaluation pipeline (likelihood, sample, quantile, and
point metrics for the updated and non-updated variants), a synthetic
ground-truth generator for end-to-end validation, a component-count tuning
procedure, and bit-exact file formats with a command-line front end.
"""

from .covariance import (
    DenseCovariance,
    DiagonalCovariance,
    PatternDictionary,
    PdccCovariance,
    cholesky_lower,
    cholesky_lower_batch,
    dimension,
    materialize,
)
from .errors import (
    AllComponentsDegenerate,
    DanglingDictionaryRef,
    DimensionMismatch,
    DuplicateId,
    EmptyRange,
    FormatError,
    InvalidConfig,
    InvalidLevels,
    InvalidS,
    MixcastError,
    NonFiniteInput,
    NotPositiveDefinite,
    NumericalError,
    OutOfBounds,
    ParseError,
    RaggedRow,
    ShapeMismatch,
    ValidationError,
    VersionMismatch,
)
from .generator import (
    GeneratorConfig,
    GroundTruth,
    approximate_forecast,
    draw_day,
    make_ground_truth,
    sample_conditions,
)
from .io import (
    read_components,
    read_conditions,
    read_generator_config,
    read_grid,
    read_model,
    read_profiles,
    read_trace,
    read_tuning_report,
    write_components,
    write_conditions,
    write_ensemble,
    write_generator_config,
    write_grid,
    write_model,
    write_profiles,
    write_trace,
    write_tuning_report,
)
from .metrics import (
    DEFAULT_QUANTILE_LEVELS,
    EvalInstance,
    EvaluationResult,
    PerformanceTrace,
    QuantileSet,
    StepMask,
    WaterfallGrid,
    ae_grid,
    crps_trace,
    empirical_quantiles,
    evaluate_test_set,
    mae_trace,
    make_test_set,
    nll_summary,
    nll_trace,
    rmse_trace,
    step_mask,
)
from .mixture import (
    ForecastUpdater,
    IntradayUpdate,
    MixtureForecast,
    MvnComponent,
    PosteriorWeights,
    condition_component,
    log_density,
    marginalize,
    mixture_mean,
    posterior_weights,
    predictive_log_density,
    remaining_marginal,
    update,
)
from .sampling import Ensemble, sample_day_ahead, sample_ensemble
from .substreams import derive_seed
from .tuning import (
    BestCaseSet,
    SynthDraw,
    TuningReport,
    build_best_case_set,
    build_synthetic_set,
    select_k,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # forecasts and updating
    "MvnComponent",
    "MixtureForecast",
    "PosteriorWeights",
    "ForecastUpdater",
    "IntradayUpdate",
    "update",
    "posterior_weights",
    "predictive_log_density",
    "log_density",
    "marginalize",
    "remaining_marginal",
    "condition_component",
    "mixture_mean",
    # covariances
    "PatternDictionary",
    "DiagonalCovariance",
    "PdccCovariance",
    "DenseCovariance",
    "cholesky_lower",
    "cholesky_lower_batch",
    "dimension",
    "materialize",
    # sampling
    "Ensemble",
    "sample_ensemble",
    "sample_day_ahead",
    "derive_seed",
    # metrics
    "DEFAULT_QUANTILE_LEVELS",
    "EvalInstance",
    "make_test_set",
    "PerformanceTrace",
    "WaterfallGrid",
    "QuantileSet",
    "StepMask",
    "step_mask",
    "empirical_quantiles",
    "ae_grid",
    "mae_trace",
    "crps_trace",
    "rmse_trace",
    "nll_trace",
    "nll_summary",
    "evaluate_test_set",
    "EvaluationResult",
    # generator
    "GeneratorConfig",
    "GroundTruth",
    "make_ground_truth",
    "approximate_forecast",
    "draw_day",
    "sample_conditions",
    # tuning
    "TuningReport",
    "BestCaseSet",
    "SynthDraw",
    "build_best_case_set",
    "build_synthetic_set",
    "select_k",
    # io
    "read_model",
    "write_model",
    "read_profiles",
    "write_profiles",
    "read_conditions",
    "write_conditions",
    "read_components",
    "write_components",
    "write_ensemble",
    "read_trace",
    "write_trace",
    "read_grid",
    "write_grid",
    "read_tuning_report",
    "write_tuning_report",
    "read_generator_config",
    "write_generator_config",
    # errors
    "MixcastError",
    "ValidationError",
    "DimensionMismatch",
    "NonFiniteInput",
    "EmptyRange",
    "OutOfBounds",
    "InvalidS",
    "InvalidLevels",
    "InvalidConfig",
    "ShapeMismatch",
    "NumericalError",
    "NotPositiveDefinite",
    "AllComponentsDegenerate",
    "FormatError",
    "ParseError",
    "VersionMismatch",
    "DanglingDictionaryRef",
    "RaggedRow",
    "DuplicateId",
]
