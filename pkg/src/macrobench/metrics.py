"""Forecast accuracy metrics and leaderboard ranking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import Period, TimeSeries

SMAPE_ZERO_TOL = 1e-12

TIERS = ("good", "ok", "meh", "bad")


class MetricError(ValueError):
    pass


class DegenerateDenominator(MetricError):
    """MASE scaling denominator is zero."""


@dataclass(frozen=True)
class ErrorSample:
    """Aligned actuals and forecasts over strictly increasing periods."""

    actuals: np.ndarray
    forecasts: np.ndarray
    periods: tuple[Period, ...]

    def __post_init__(self):
        a = np.asarray(self.actuals, dtype=float)
        f = np.asarray(self.forecasts, dtype=float)
        if a.ndim != 1 or a.size == 0 or a.shape != f.shape or len(self.periods) != a.size:
            raise MetricError("actuals, forecasts and periods must share a non-zero length")
        if any(q <= p for p, q in zip(self.periods, self.periods[1:])):
            raise MetricError("periods must be strictly increasing")
        object.__setattr__(self, "actuals", a)
        object.__setattr__(self, "forecasts", f)
        object.__setattr__(self, "periods", tuple(self.periods))

    def __len__(self) -> int:
        return self.actuals.size


@dataclass(frozen=True)
class MetricValue:
    kind: str
    value: float
    m: int | None = None

    def __post_init__(self):
        if self.value < 0:
            raise MetricError(f"{self.kind} must be non-negative, got {self.value}")
        if self.kind.lower() == "smape" and self.value > 200.0:
            raise MetricError(f"SMAPE bounded by 200, got {self.value}")


def mae(e: ErrorSample) -> float:
    return float(np.mean(np.abs(e.actuals - e.forecasts)))


def mse(e: ErrorSample) -> float:
    return float(np.mean((e.actuals - e.forecasts) ** 2))


def rmse(e: ErrorSample) -> float:
    return float(np.sqrt(mse(e)))


def smape(e: ErrorSample) -> float:
    """Symmetric MAPE in [0, 200]; a 0/0 term counts as zero."""
    num = 2.0 * np.abs(e.actuals - e.forecasts)
    den = np.abs(e.actuals) + np.abs(e.forecasts)
    degenerate = (np.abs(e.actuals) < SMAPE_ZERO_TOL) & (np.abs(e.forecasts) < SMAPE_ZERO_TOL)
    terms = np.where(degenerate, 0.0, num / np.where(degenerate, 1.0, den))
    return float(100.0 * np.mean(terms))


def naive_mae(insample, m: int = 1) -> float:
    """In-sample MAE of the lag-m naive forecast, the MASE scale.

    `insample` is a TimeSeries or a plain value array.
    """
    if m < 1:
        raise MetricError(f"seasonal period m must be >= 1, got {m}")
    v = insample.values if isinstance(insample, TimeSeries) else np.asarray(insample, dtype=float)
    if v.size <= m:
        raise MetricError(f"insample length {v.size} must exceed m={m}")
    return float(np.mean(np.abs(v[m:] - v[:-m])))


def mase(e: ErrorSample, insample, m: int = 1) -> float:
    scale = naive_mae(insample, m)
    if scale == 0.0:
        raise DegenerateDenominator(f"lag-{m} naive MAE of the history is zero; MASE undefined")
    return mae(e) / scale


def compute_all(e: ErrorSample, insample=None, m: int = 1) -> dict[str, float]:
    out = {"mae": mae(e), "mse": mse(e), "rmse": rmse(e), "smape": smape(e)}
    if insample is not None:
        out["mase"] = mase(e, insample, m)
    return out


def rank_models(scores: dict[str, float], lower_is_better: bool = True) -> dict[str, float]:
    """Ranks 1..K; exact ties share the average of their positions."""
    if not scores:
        return {}
    items = sorted(scores.items(), key=lambda kv: kv[1], reverse=not lower_is_better)
    ranks: dict[str, float] = {}
    i = 0
    while i < len(items):
        j = i
        while j + 1 < len(items) and items[j + 1][1] == items[i][1]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[items[k][0]] = avg
        i = j + 1
    return ranks


def tier_labels(column: dict[str, float], lower_is_better: bool = True) -> dict[str, str]:
    """Quartile bins by rank: best quarter 'good', then 'ok', 'meh', 'bad'.

    Bin sizes for K models are K//4 each plus one extra for the leading bins
    when K % 4 > 0 (K=9 gives 3,2,2,2). All-equal columns map to 'ok'.
    """
    if not column:
        return {}
    values = list(column.values())
    if all(v == values[0] for v in values):
        return {name: "ok" for name in column}
    ranks = rank_models(column, lower_is_better)
    ordered = sorted(column, key=lambda name: (ranks[name], name))
    k = len(ordered)
    sizes = [k // 4 + (1 if j < k % 4 else 0) for j in range(4)]
    out: dict[str, str] = {}
    pos = 0
    for tier, size in zip(TIERS, sizes):
        for name in ordered[pos : pos + size]:
            out[name] = tier
        pos += size
    return out
