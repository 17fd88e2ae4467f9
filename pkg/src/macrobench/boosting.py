"""Least-squares gradient boosting with regression stumps.

Squared-error loss L(y, F) = (y - F)^2 / 2. The model starts from the
target mean and at each stage fits the depth-1 stump minimizing squared
error against the current residuals; for this loss the optimal line
search step is 1, so each stage contributes shrinkage * stump(x).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .series import Period, TimeSeries

MODEL_FORMAT = "lsboost-stumps/1"

DEFAULT_STAGES = 100
DEFAULT_SHRINKAGE = 0.1


class BoostError(ValueError):
    pass


@dataclass(frozen=True)
class Stump:
    feature_index: int
    threshold: float
    left_value: float
    right_value: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        x = np.asarray(X, dtype=float)
        return np.where(x[..., self.feature_index] <= self.threshold, self.left_value, self.right_value)


@dataclass
class BoostModel:
    f0: float
    shrinkage: float
    n_features: int
    stages: list[tuple[float, Stump]] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)

    @property
    def n_stages(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class LagFeatureConfig:
    """Own lags plus quarter dummies (Q1 is the reference class)."""

    lags: tuple[int, ...] = (1, 2, 3, 4)
    include_seasonal_dummies: bool = True

    def __post_init__(self):
        if not self.lags or len(set(self.lags)) != len(self.lags) or min(self.lags) < 1:
            raise BoostError(f"lags must be distinct positive integers, got {self.lags}")
        object.__setattr__(self, "lags", tuple(self.lags))

    @property
    def n_features(self) -> int:
        return len(self.lags) + (3 if self.include_seasonal_dummies else 0)


def _feature_row(values: list[float], cfg: LagFeatureConfig, target_period: Period) -> list[float]:
    # values holds observations strictly before target_period, most recent last
    row = [values[-lag] for lag in cfg.lags]
    if cfg.include_seasonal_dummies:
        q = target_period.quarter
        row.extend([1.0 if q == 2 else 0.0, 1.0 if q == 3 else 0.0, 1.0 if q == 4 else 0.0])
    return row


def make_supervised(history: TimeSeries, cfg: LagFeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Lagged design matrix and target vector; row t never sees period t or later."""
    max_lag = max(cfg.lags)
    if len(history) <= max_lag:
        raise BoostError(f"history length {len(history)} must exceed max lag {max_lag}")
    values = list(history.values)
    X, y = [], []
    for t in range(max_lag, len(values)):
        X.append(_feature_row(values[:t], cfg, history.start + t))
        y.append(values[t])
    return np.asarray(X, dtype=float), np.asarray(y, dtype=float)


def _best_stump(X: np.ndarray, residuals: np.ndarray) -> Stump:
    """Exhaustive scan over features and midpoint thresholds.

    Ties break toward the lowest feature index, then the lowest threshold
    (the scan visits candidates in exactly that order and only accepts
    strict improvements).
    """
    n = residuals.size
    total = float(np.sum(residuals))
    best_sse = np.inf
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        rs = residuals[order]
        cut = np.flatnonzero(xs[:-1] < xs[1:]) + 1  # split before these positions
        if cut.size == 0:
            continue
        left_sum = np.cumsum(rs)[cut - 1]
        left_n = cut.astype(float)
        right_sum = total - left_sum
        right_n = n - left_n
        # SSE minus the constant sum(r^2); lower is better
        gain = -(left_sum**2 / left_n + right_sum**2 / right_n)
        for pos in range(cut.size):
            g = gain[pos]
            if g < best_sse:
                best_sse = g
                i = cut[pos]
                best = Stump(
                    feature_index=j,
                    threshold=float((xs[i - 1] + xs[i]) / 2.0),
                    left_value=float(left_sum[pos] / left_n[pos]),
                    right_value=float(right_sum[pos] / right_n[pos]),
                )
    if best is None:
        # every feature is constant: degenerate stump predicting the mean
        mean = float(np.mean(residuals))
        best = Stump(0, float(X[0, 0]) if X.size else 0.0, mean, mean)
    return best


def fit_lsboost(
    X: np.ndarray,
    y: np.ndarray,
    n_stages: int = DEFAULT_STAGES,
    shrinkage: float = DEFAULT_SHRINKAGE,
) -> BoostModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise BoostError("X must be 2-d with one row per target")
    if y.size < 4:
        raise BoostError(f"need at least 4 training rows, got {y.size}")
    if n_stages < 1:
        raise BoostError(f"n_stages must be >= 1, got {n_stages}")
    if not 0.0 < shrinkage <= 1.0:
        raise BoostError(f"shrinkage must be in (0, 1], got {shrinkage}")
    model = BoostModel(f0=float(np.mean(y)), shrinkage=shrinkage, n_features=X.shape[1])
    current = np.full(y.size, model.f0)
    for _ in range(n_stages):
        residuals = y - current
        stump = _best_stump(X, residuals)
        current = current + shrinkage * stump.predict(X)
        model.stages.append((1.0, stump))
        model.train_mse.append(float(np.mean((y - current) ** 2)))
    return model


def predict_lsboost(model: BoostModel, x):
    """Predict for one feature vector (returns float) or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[np.newaxis, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise BoostError(f"feature shape {x.shape} does not match training ({model.n_features},)")
    out = np.full(X.shape[0], model.f0)
    for rho, stump in model.stages:
        out = out + model.shrinkage * rho * stump.predict(X)
    return float(out[0]) if single else out


def lsboost_forecast(
    history: TimeSeries,
    cfg: LagFeatureConfig,
    horizon: int,
    n_stages: int = DEFAULT_STAGES,
    shrinkage: float = DEFAULT_SHRINKAGE,
    model: BoostModel | None = None,
) -> np.ndarray:
    """Recursive multi-step forecast; the model is fitted once per origin.

    Step h appends the step h-1 forecast as a pseudo-observation before
    rebuilding the feature row. A prefitted model may be supplied to
    reuse coefficients across nearby origins.
    """
    if horizon < 1:
        raise BoostError(f"horizon must be >= 1, got {horizon}")
    if model is None:
        X, y = make_supervised(history, cfg)
        model = fit_lsboost(X, y, n_stages, shrinkage)
    values = list(history.values)
    out = []
    for h in range(1, horizon + 1):
        row = _feature_row(values, cfg, history.end + h)
        pred = predict_lsboost(model, row)
        out.append(pred)
        values.append(pred)
    return np.asarray(out)


def boost_to_json(model: BoostModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "f0": model.f0,
        "shrinkage": model.shrinkage,
        "n_features": model.n_features,
        "stages": [
            {
                "rho": rho,
                "feature_index": s.feature_index,
                "threshold": s.threshold,
                "left_value": s.left_value,
                "right_value": s.right_value,
            }
            for rho, s in model.stages
        ],
        "train_mse": model.train_mse,
    }
    return json.dumps(doc, sort_keys=True)


def boost_from_json(text: str) -> BoostModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise BoostError(f"unsupported model format {doc.get('format')!r}")
    model = BoostModel(
        f0=float(doc["f0"]),
        shrinkage=float(doc["shrinkage"]),
        n_features=int(doc["n_features"]),
    )
    for s in doc["stages"]:
        stump = Stump(int(s["feature_index"]), float(s["threshold"]), float(s["left_value"]), float(s["right_value"]))
        model.stages.append((float(s["rho"]), stump))
    model.train_mse = [float(v) for v in doc.get("train_mse", [])]
    return model
