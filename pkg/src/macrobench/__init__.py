"""Quarterly macroeconomic forecast backtesting and model comparison."""

from .series import (
    IngestError,
    Period,
    SeriesError,
    TimeSeries,
    Unit,
    Window,
    ingest_csv,
    levels_from_qoq,
    qoq_from_level,
    slice_series,
    to_csv,
    yoy_from_level,
)
from .metrics import (
    DegenerateDenominator,
    ErrorSample,
    MetricError,
    MetricValue,
    compute_all,
    mae,
    mase,
    mse,
    naive_mae,
    rank_models,
    rmse,
    smape,
    tier_labels,
)
from .dm import (
    DegenerateVariance,
    DMError,
    DMResult,
    LossDifferential,
    dm_grid,
    dm_statistic,
    is_significant,
    loss_differential,
)
from .baselines import (
    ArimaError,
    ArimaFit,
    ArimaSpec,
    AutoArimaError,
    arima_apply,
    arima_fitted,
    arima_forecast,
    arima_residuals,
    auto_arima,
    fit_arima,
    kpss_statistic,
    persistence_forecast,
    seasonal_strength,
    select_d,
)
from .boosting import (
    BoostError,
    BoostModel,
    LagFeatureConfig,
    Stump,
    boost_from_json,
    boost_to_json,
    fit_lsboost,
    lsboost_forecast,
    make_supervised,
    predict_lsboost,
)
from .factors import (
    FactorError,
    FactorFit,
    FactorPanel,
    default_r,
    extract_factors,
    factor_forecast,
    fit_factor_var,
    fit_from_json,
    fit_to_json,
    select_var_order,
)
from .gateway import (
    AdapterCrashed,
    AdapterStartupError,
    CacheKey,
    FixtureAdapter,
    FixtureCorrupt,
    FixtureMiss,
    ForecastCache,
    Gateway,
    GatewayError,
    GatewayTimeout,
    HttpAdapter,
    ProtocolError,
    SubprocessAdapter,
    build_request,
    canonical_json,
    replay_fixture,
    request_cache_key,
    validate_handshake,
    validate_request,
    validate_response,
)
from .backtest import (
    DEFAULT_SLICES,
    ArimaForecaster,
    BacktestError,
    BacktestPlan,
    BacktestRun,
    FactorForecaster,
    ForecastRecord,
    GatewayForecaster,
    LSBoostForecaster,
    MetricReport,
    PersistenceForecaster,
    PlanError,
    RobustnessPoint,
    build_registry,
    error_sample_from_records,
    evaluate_slices,
    robustness_regression,
    run_backtest,
)
from .reports import (
    dm_grid_to_csv,
    report_to_json,
    report_to_markdown,
    robustness_to_csv,
    runs_from_json,
    runs_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterCrashed",
    "AdapterStartupError",
    "ArimaError",
    "ArimaFit",
    "ArimaForecaster",
    "ArimaSpec",
    "AutoArimaError",
    "BacktestError",
    "BacktestPlan",
    "BacktestRun",
    "BoostError",
    "BoostModel",
    "CacheKey",
    "DEFAULT_SLICES",
    "DegenerateDenominator",
    "DegenerateVariance",
    "DMError",
    "DMResult",
    "ErrorSample",
    "FactorError",
    "FactorFit",
    "FactorForecaster",
    "FactorPanel",
    "FixtureAdapter",
    "FixtureCorrupt",
    "FixtureMiss",
    "ForecastCache",
    "ForecastRecord",
    "Gateway",
    "GatewayError",
    "GatewayForecaster",
    "GatewayTimeout",
    "HttpAdapter",
    "IngestError",
    "LSBoostForecaster",
    "LagFeatureConfig",
    "LossDifferential",
    "MetricError",
    "MetricReport",
    "MetricValue",
    "Period",
    "PersistenceForecaster",
    "PlanError",
    "ProtocolError",
    "RobustnessPoint",
    "SeriesError",
    "Stump",
    "SubprocessAdapter",
    "TimeSeries",
    "Unit",
    "Window",
    "arima_apply",
    "arima_fitted",
    "arima_forecast",
    "arima_residuals",
    "auto_arima",
    "boost_from_json",
    "boost_to_json",
    "build_registry",
    "build_request",
    "canonical_json",
    "compute_all",
    "default_r",
    "dm_grid",
    "dm_grid_to_csv",
    "dm_statistic",
    "error_sample_from_records",
    "evaluate_slices",
    "extract_factors",
    "factor_forecast",
    "fit_arima",
    "fit_factor_var",
    "fit_from_json",
    "fit_lsboost",
    "fit_to_json",
    "ingest_csv",
    "is_significant",
    "kpss_statistic",
    "levels_from_qoq",
    "loss_differential",
    "lsboost_forecast",
    "mae",
    "make_supervised",
    "mase",
    "mse",
    "naive_mae",
    "persistence_forecast",
    "predict_lsboost",
    "qoq_from_level",
    "rank_models",
    "replay_fixture",
    "report_to_json",
    "report_to_markdown",
    "request_cache_key",
    "rmse",
    "robustness_regression",
    "robustness_to_csv",
    "run_backtest",
    "runs_from_json",
    "runs_to_json",
    "seasonal_strength",
    "select_d",
    "select_var_order",
    "slice_series",
    "smape",
    "tier_labels",
    "to_csv",
    "validate_handshake",
    "validate_request",
    "validate_response",
    "yoy_from_level",
]
