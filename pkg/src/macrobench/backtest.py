"""Expanding-window backtest orchestration and downstream evaluation.

For every origin t in the plan, each forecaster sees observations up to
and including t and predicts t+1 .. t+horizon. Forecast records carry
their origin, target, forecast and realized value; failures are recorded
with a reason and excluded from metrics (a model missing more than 10%
of a slice's records gets n/a for that slice).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import baselines, boosting, factors
from .metrics import (
    DegenerateDenominator,
    ErrorSample,
    compute_all,
    naive_mae,
    rank_models,
    tier_labels,
)
from .series import Period, TimeSeries, Window

MIN_TRAINING_OBSERVATIONS = 16
MAX_MISSING_SHARE = 0.10

DEFAULT_SLICES: tuple[tuple[str, Window], ...] = (
    ("26-year Past-to-Present (1999Q3-2024Q3)", Window(Period(1999, 3), Period(2024, 3))),
    ("3-year Pre-COVID-19 (2017Q1-2019Q4)", Window(Period(2017, 1), Period(2019, 4))),
    ("3-year During-COVID-19 (2020Q1-2022Q4)", Window(Period(2020, 1), Period(2022, 4))),
    ("2-year Post-COVID-19 (2023Q1-2024Q3)", Window(Period(2023, 1), Period(2024, 3))),
)


class PlanError(ValueError):
    pass


class BacktestError(ValueError):
    pass


@dataclass(frozen=True)
class BacktestPlan:
    series_ids: tuple[str, ...]
    model_ids: tuple[str, ...]
    first_origin: Period
    last_origin: Period
    horizon: int = 1
    refit_stride: int = 1
    slices: tuple[tuple[str, Window], ...] = DEFAULT_SLICES

    def __post_init__(self):
        if not self.series_ids:
            raise PlanError("plan needs at least one series")
        if not self.model_ids:
            raise PlanError("plan needs at least one model")
        if len(set(self.model_ids)) != len(self.model_ids):
            raise PlanError("model ids must be unique")
        if not self.first_origin < self.last_origin:
            raise PlanError(f"first origin {self.first_origin} must precede last origin {self.last_origin}")
        if self.horizon < 1:
            raise PlanError(f"horizon must be >= 1, got {self.horizon}")
        if self.refit_stride < 1:
            raise PlanError(f"refit stride must be >= 1, got {self.refit_stride}")
        object.__setattr__(self, "series_ids", tuple(self.series_ids))
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        object.__setattr__(self, "slices", tuple((str(n), w) for n, w in self.slices))

    def origins(self) -> list[Period]:
        return [self.first_origin + i for i in range(self.last_origin - self.first_origin + 1)]


@dataclass(frozen=True)
class ForecastRecord:
    origin: Period
    target: Period
    forecast: float | None
    actual: float | None
    status: str = "ok"  # "ok" | "failed"
    reason: str | None = None


@dataclass
class BacktestRun:
    model_id: str
    series_id: str
    records: list[ForecastRecord] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r.status != "ok")


@dataclass(frozen=True)
class RobustnessPoint:
    window: Window
    actual_variance: float
    model_rmse: float


class Forecaster(Protocol):
    def fit(self, history: TimeSeries) -> object: ...

    def predict(self, state: object, history: TimeSeries, horizon: int) -> np.ndarray: ...


class PersistenceForecaster:
    def fit(self, history: TimeSeries):
        return None

    def predict(self, state, history: TimeSeries, horizon: int) -> np.ndarray:
        return baselines.persistence_forecast(history, horizon)


class ArimaForecaster:
    def __init__(self, **search_options):
        self.search_options = search_options

    def fit(self, history: TimeSeries):
        return baselines.auto_arima(history, **self.search_options)

    def predict(self, state, history: TimeSeries, horizon: int) -> np.ndarray:
        return baselines.arima_apply(state, history, horizon)


class LSBoostForecaster:
    def __init__(self, cfg: boosting.LagFeatureConfig | None = None, n_stages: int = boosting.DEFAULT_STAGES, shrinkage: float = boosting.DEFAULT_SHRINKAGE):
        self.cfg = cfg or boosting.LagFeatureConfig()
        self.n_stages = n_stages
        self.shrinkage = shrinkage

    def fit(self, history: TimeSeries):
        X, y = boosting.make_supervised(history, self.cfg)
        return boosting.fit_lsboost(X, y, self.n_stages, self.shrinkage)

    def predict(self, state, history: TimeSeries, horizon: int) -> np.ndarray:
        return boosting.lsboost_forecast(history, self.cfg, horizon, model=state)


class FactorForecaster:
    """Panel factor model; requires the full multi-series data set."""

    def __init__(self, data: dict[str, TimeSeries], r: int | None = None, var_order: int | None = 1):
        self.data = data
        self.r = r
        self.var_order = var_order

    def fit(self, history: TimeSeries):
        origin = history.end
        panel_series = [s.up_to(origin) for s in self.data.values()]
        if len(panel_series) < 2:
            raise factors.FactorError("factor model not applicable: panel has a single series")
        panel = factors.FactorPanel.from_series(panel_series)
        r = self.r if self.r is not None else factors.default_r(panel)
        fit = factors.extract_factors(panel, r)
        p = self.var_order if self.var_order is not None else factors.select_var_order(fit)
        return factors.fit_factor_var(fit, p)

    def predict(self, state, history: TimeSeries, horizon: int) -> np.ndarray:
        target = state.series_ids.index(history.id)
        return factors.factor_forecast(state, target, horizon)


class GatewayForecaster:
    def __init__(self, gateway, quantiles: list[float] | None = None):
        self.gateway = gateway
        self.quantiles = quantiles

    def fit(self, history: TimeSeries):
        return None

    def predict(self, state, history: TimeSeries, horizon: int) -> np.ndarray:
        from .gateway import build_request

        req = build_request(history, history.end, horizon, quantiles=self.quantiles)
        response = self.gateway.request_forecast(req)
        return np.asarray(response["point"], dtype=float)


def build_registry(
    model_ids,
    data: dict[str, TimeSeries],
    gateways: dict[str, object] | None = None,
    model_options: dict[str, dict] | None = None,
) -> dict[str, Forecaster]:
    """Standard registry: in-process baselines by name plus gateway models."""
    gateways = gateways or {}
    opts = model_options or {}
    registry: dict[str, Forecaster] = {}
    for mid in model_ids:
        o = opts.get(mid, {})
        if mid == "persistence":
            registry[mid] = PersistenceForecaster()
        elif mid == "arima":
            registry[mid] = ArimaForecaster(**o)
        elif mid == "lsboost":
            cfg = boosting.LagFeatureConfig(
                lags=tuple(o.get("lags", (1, 2, 3, 4))),
                include_seasonal_dummies=o.get("include_seasonal_dummies", True),
            )
            registry[mid] = LSBoostForecaster(cfg, o.get("n_stages", boosting.DEFAULT_STAGES), o.get("shrinkage", boosting.DEFAULT_SHRINKAGE))
        elif mid == "factor":
            registry[mid] = FactorForecaster(data, o.get("r"), o.get("var_order", 1))
        elif mid in gateways:
            registry[mid] = GatewayForecaster(gateways[mid])
        else:
            raise PlanError(f"unknown model {mid!r}: not a baseline and no adapter configured")
    return registry


def run_backtest(
    plan: BacktestPlan,
    data: dict[str, TimeSeries],
    forecasters: dict[str, Forecaster],
    jobs: int = 1,
) -> list[BacktestRun]:
    for sid in plan.series_ids:
        if sid not in data:
            raise PlanError(f"series {sid!r} not present in the data")
        series = data[sid]
        if plan.first_origin - series.start + 1 < MIN_TRAINING_OBSERVATIONS:
            raise PlanError(
                f"first origin {plan.first_origin} leaves fewer than "
                f"{MIN_TRAINING_OBSERVATIONS} training observations on {sid!r}"
            )
        if plan.last_origin + plan.horizon > series.end:
            raise PlanError(
                f"last origin {plan.last_origin} plus horizon {plan.horizon} "
                f"passes the end of {sid!r} ({series.end})"
            )
    for mid in plan.model_ids:
        if mid not in forecasters:
            raise PlanError(f"model {mid!r} has no registered forecaster")

    pairs = [(mid, sid) for mid in plan.model_ids for sid in plan.series_ids]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(lambda ms: _run_pair(plan, data[ms[1]], ms[0], forecasters[ms[0]]), pairs))
    else:
        runs = [_run_pair(plan, data[sid], mid, forecasters[mid]) for mid, sid in pairs]
    runs.sort(key=lambda r: (r.model_id, r.series_id))
    return runs


def _run_pair(plan: BacktestPlan, series: TimeSeries, model_id: str, forecaster: Forecaster) -> BacktestRun:
    run = BacktestRun(model_id=model_id, series_id=series.id)
    state = None
    state_valid = False
    for i, origin in enumerate(plan.origins()):
        history = series.up_to(origin)
        failure = None
        if i % plan.refit_stride == 0 or not state_valid:
            try:
                state = forecaster.fit(history)
                state_valid = True
            except Exception as exc:  # noqa: BLE001 - failures become records
                failure = f"fit failed: {exc}"
                state_valid = False
        if failure is None:
            try:
                point = np.asarray(forecaster.predict(state, history, plan.horizon), dtype=float)
                if point.shape != (plan.horizon,) or not np.all(np.isfinite(point)):
                    raise BacktestError(f"forecaster returned invalid point vector {point!r}")
            except Exception as exc:  # noqa: BLE001
                failure = f"predict failed: {exc}"
        for h in range(1, plan.horizon + 1):
            target = origin + h
            actual = series.value_at(target)
            if failure is None:
                run.records.append(ForecastRecord(origin, target, float(point[h - 1]), actual))
            else:
                run.records.append(ForecastRecord(origin, target, None, actual, status="failed", reason=failure))
    return run


def error_sample_from_records(records, window: Window | None = None) -> ErrorSample:
    """Ok records (optionally restricted to targets inside `window`) as an
    ErrorSample; raises ValueError when none qualify."""
    chosen = [
        r
        for r in records
        if r.status == "ok" and (window is None or r.target in window)
    ]
    if not chosen:
        raise BacktestError("no usable records" + (f" with targets in {window.start}..{window.end}" if window else ""))
    chosen.sort(key=lambda r: r.target)
    by_target: dict[Period, ForecastRecord] = {}
    for r in chosen:
        by_target[r.target] = r  # horizon > 1: last origin's view of each target
    targets = sorted(by_target)
    return ErrorSample(
        np.array([by_target[t].actual for t in targets]),
        np.array([by_target[t].forecast for t in targets]),
        tuple(targets),
    )


@dataclass
class MetricReport:
    slice_names: list[str]
    sectors: list[str]
    models: list[str]
    mase_m: int
    cells: dict[tuple[str, str, str], dict[str, float | None]]
    ranks: dict[tuple[str, str, str], dict[str, float]]
    tiers: dict[tuple[str, str, str], dict[str, str]]
    mean_rank: dict[str, dict[str, float | None]]
    coverage: dict[tuple[str, str, str], float]

    METRICS = ("mae", "rmse", "smape", "mase")


def evaluate_slices(
    runs: list[BacktestRun],
    data: dict[str, TimeSeries],
    slices: tuple[tuple[str, Window], ...] = DEFAULT_SLICES,
    m: int = 1,
    mase_per_origin: bool = False,
) -> MetricReport:
    """Per (slice, sector, model) metric table with ranks, tiers and the
    per-model mean RMSE rank across sectors."""
    sectors: list[str] = []
    models: list[str] = []
    by_pair: dict[tuple[str, str], BacktestRun] = {}
    for run in runs:
        if run.series_id not in sectors:
            sectors.append(run.series_id)
        if run.model_id not in models:
            models.append(run.model_id)
        by_pair[(run.model_id, run.series_id)] = run

    cells: dict[tuple[str, str, str], dict[str, float | None]] = {}
    coverage: dict[tuple[str, str, str], float] = {}
    for slice_name, window in slices:
        for sector in sectors:
            for model in models:
                run = by_pair.get((model, sector))
                key = (slice_name, sector, model)
                cells[key] = {metric: None for metric in MetricReport.METRICS}
                if run is None:
                    continue
                in_slice = [r for r in run.records if r.target in window]
                if not in_slice:
                    continue
                ok = [r for r in in_slice if r.status == "ok"]
                coverage[key] = len(ok) / len(in_slice)
                if len(ok) < (1.0 - MAX_MISSING_SHARE) * len(in_slice) or not ok:
                    continue
                sample = error_sample_from_records(ok)
                values = compute_all(sample)
                values["mase"] = _slice_mase(ok, data.get(sector), m, mase_per_origin)
                cells[key] = values

    ranks: dict[tuple[str, str, str], dict[str, float]] = {}
    tiers: dict[tuple[str, str, str], dict[str, str]] = {}
    for slice_name, _ in slices:
        for sector in sectors:
            for metric in MetricReport.METRICS:
                column = {
                    model: cells[(slice_name, sector, model)][metric]
                    for model in models
                    if cells[(slice_name, sector, model)].get(metric) is not None
                }
                key = (slice_name, sector, metric)
                ranks[key] = rank_models(column)
                tiers[key] = tier_labels(column)

    mean_rank: dict[str, dict[str, float | None]] = {}
    for slice_name, _ in slices:
        per_model: dict[str, float | None] = {}
        for model in models:
            rs = [
                ranks[(slice_name, sector, "rmse")][model]
                for sector in sectors
                if model in ranks.get((slice_name, sector, "rmse"), {})
            ]
            per_model[model] = float(np.mean(rs)) if rs else None
        mean_rank[slice_name] = per_model

    return MetricReport(
        slice_names=[name for name, _ in slices],
        sectors=sectors,
        models=models,
        mase_m=m,
        cells=cells,
        ranks=ranks,
        tiers=tiers,
        mean_rank=mean_rank,
        coverage=coverage,
    )


def _slice_mase(ok_records, series: TimeSeries | None, m: int, per_origin: bool) -> float | None:
    if series is None:
        return None
    try:
        if per_origin:
            terms = []
            for r in ok_records:
                scale = naive_mae(series.up_to(r.origin), m)
                if scale == 0.0:
                    return None
                terms.append(abs(r.actual - r.forecast) / scale)
            return float(np.mean(terms))
        final_origin = max(r.origin for r in ok_records)
        scale = naive_mae(series.up_to(final_origin), m)
        if scale == 0.0:
            return None
        numerator = float(np.mean([abs(r.actual - r.forecast) for r in ok_records]))
        return numerator / scale
    except (DegenerateDenominator, ValueError):
        return None


def robustness_regression(
    run: BacktestRun,
    actuals: TimeSeries,
    n_windows: int = 200,
    min_len: int = 10,
    seed: int = 0,
) -> tuple[list[RobustnessPoint], float, float]:
    """Random sub-period variance-versus-RMSE regression.

    Windows are drawn with a seeded PCG64 generator: a uniform start
    among positions leaving at least `min_len` quarters, then a uniform
    length within feasibility. Returns (points, slope, intercept) for
    the least-squares line RMSE = intercept + slope * variance.
    """
    if n_windows < 2:
        raise BacktestError(f"need at least 2 windows, got {n_windows}")
    ok = [r for r in run.records if r.status == "ok"]
    if not ok:
        raise BacktestError("run has no usable records")
    targets = sorted(r.target for r in ok)
    span_start, span_end = targets[0], targets[-1]
    span_len = span_end - span_start + 1
    if span_len < min_len:
        raise BacktestError(f"target span {span_len} shorter than the minimum window {min_len}")
    by_target = {r.target: r for r in ok}

    rng = np.random.default_rng(seed)
    points: list[RobustnessPoint] = []
    for _ in range(n_windows):
        start_offset = int(rng.integers(0, span_len - min_len + 1))
        max_len = span_len - start_offset
        length = int(rng.integers(min_len, max_len + 1))
        window = Window(span_start + start_offset, span_start + start_offset + length - 1)
        inside = [by_target[t] for t in by_target if t in window]
        if not inside:
            continue
        actual_values = np.array([r.actual for r in inside])
        errors = np.array([r.actual - r.forecast for r in inside])
        points.append(
            RobustnessPoint(
                window=window,
                actual_variance=float(np.var(actual_values)),
                model_rmse=float(np.sqrt(np.mean(errors**2))),
            )
        )
    variances = np.array([p.actual_variance for p in points])
    rmses = np.array([p.model_rmse for p in points])
    if np.all(variances == 0.0):
        raise BacktestError("every sampled window has zero actual variance; regression undefined")
    design = np.column_stack([variances, np.ones(len(points))])
    coef, *_ = np.linalg.lstsq(design, rmses, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    return points, slope, intercept
