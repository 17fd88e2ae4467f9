"""Diebold-Mariano equal-predictive-accuracy test with a HAC variance.

The loss differential between two forecast error sequences is tested
against a zero mean using the long-run variance estimate

    var_hat = gamma_0 + 2 * sum_{k=1..h-1} (1 - k/h) * gamma_k

where gamma_k is the sample autocovariance of the differential at lag k
and h the forecast horizon. The statistic d_bar / sqrt(var_hat / T) is
referred to the standard normal distribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .metrics import ErrorSample
from .series import Window

LOSSES = ("squared", "absolute")

SIGNIFICANCE_LEVEL = 0.05


class DMError(ValueError):
    pass


class DegenerateVariance(DMError):
    """Loss differential has zero variance; the statistic is not a number."""


@dataclass(frozen=True)
class LossDifferential:
    d: np.ndarray
    loss: str
    horizon: int

    def __post_init__(self):
        arr = np.asarray(self.d, dtype=float)
        if arr.size < 2:
            raise DMError(f"need at least 2 loss differentials, got {arr.size}")
        if self.loss not in LOSSES:
            raise DMError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.horizon < 1:
            raise DMError(f"horizon must be >= 1, got {self.horizon}")
        object.__setattr__(self, "d", arr)


@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float
    n: int
    variance: float
    gammas: tuple[float, ...]
    used_fallback: bool = False


def loss_differential(
    e1: ErrorSample, e2: ErrorSample, loss: str = "squared", horizon: int = 1
) -> LossDifferential:
    """d_t = loss(e1_t) - loss(e2_t) over the shared period index.

    Parameters
    ----------
    e1, e2 : ErrorSample
        Forecast samples for the two models; periods must match exactly.
    loss : {"squared", "absolute"}
    horizon : int
        Forecast horizon h carried into the variance truncation.
    """
    if e1.periods != e2.periods:
        raise DMError("error samples do not share the same periods")
    err1 = e1.actuals - e1.forecasts
    err2 = e2.actuals - e2.forecasts
    if loss == "squared":
        d = err1**2 - err2**2
    elif loss == "absolute":
        d = np.abs(err1) - np.abs(err2)
    else:
        raise DMError(f"loss must be one of {LOSSES}, got {loss!r}")
    return LossDifferential(d, loss, horizon)


def dm_statistic(ld: LossDifferential, harvey_correction: bool = False) -> DMResult:
    """Test the null of zero mean loss differential.

    Returns
    -------
    DMResult
        statistic, two-sided p-value, sample size, the variance estimate
        actually used, and the autocovariances gamma_0..gamma_{h-1}.

    Notes
    -----
    A truncated kernel variance can be non-positive; in that case gamma_0
    alone is used and the result is flagged (`used_fallback`). A zero
    gamma_0 (constant differential) is an error. With
    `harvey_correction` the statistic is scaled by the small-sample
    factor and referred to Student's t with n-1 degrees of freedom.
    """
    d = ld.d
    n = d.size
    h = ld.horizon
    if n < max(8, 2 * h):
        raise DMError(f"need at least max(8, 2h)={max(8, 2 * h)} observations, got {n}")
    dbar = float(np.mean(d))
    centered = d - dbar
    gammas = []
    for k in range(h):
        gammas.append(float(np.dot(centered[k:], centered[: n - k]) / n))
    variance = gammas[0] + 2.0 * sum((1.0 - k / h) * gammas[k] for k in range(1, h))
    used_fallback = False
    if variance <= 0.0:
        if gammas[0] == 0.0:
            raise DegenerateVariance("loss differential is constant; DM statistic undefined (0/0)")
        warnings.warn(
            "truncated HAC variance non-positive; falling back to gamma_0",
            RuntimeWarning,
            stacklevel=2,
        )
        variance = gammas[0]
        used_fallback = True
    if variance == 0.0:
        raise DegenerateVariance("loss differential is constant; DM statistic undefined (0/0)")
    statistic = dbar / np.sqrt(variance / n)
    if harvey_correction:
        factor = np.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
        statistic = factor * statistic
        p_value = 2.0 * float(stats.t.sf(abs(statistic), df=n - 1))
    else:
        p_value = 2.0 * float(stats.norm.sf(abs(statistic)))
    return DMResult(float(statistic), p_value, n, float(variance), tuple(gammas), used_fallback)


def is_significant(p_value: float, alpha: float = SIGNIFICANCE_LEVEL) -> bool:
    """Flag rule used by report tables: strictly below alpha."""
    return p_value < alpha


def dm_grid(
    runs,
    reference_models: list[str],
    loss: str = "squared",
    slices: list[tuple[str, Window]] | None = None,
    horizon: int = 1,
) -> list[dict]:
    """Pairwise DM p-values of every candidate against each reference.

    `runs` is an iterable of backtest runs (objects with model_id,
    series_id and ok/failed records). One row is emitted per
    (slice, sector, candidate, reference) cell; cells that cannot be
    tested carry p_value None and a reason instead of being dropped.
    """
    from .backtest import error_sample_from_records  # local import to avoid a cycle

    by_model_series: dict[tuple[str, str], list] = {}
    sectors: list[str] = []
    models: list[str] = []
    for run in runs:
        by_model_series[(run.model_id, run.series_id)] = run.records
        if run.series_id not in sectors:
            sectors.append(run.series_id)
        if run.model_id not in models:
            models.append(run.model_id)
    if slices is None:
        slices = [("all", None)]

    rows = []
    for slice_name, window in slices:
        for sector in sectors:
            for model in models:
                for ref in reference_models:
                    if model == ref:
                        continue
                    row = {
                        "slice": slice_name,
                        "sector": sector,
                        "model": model,
                        "reference": ref,
                        "p_value": None,
                        "statistic": None,
                        "significant": None,
                        "n": 0,
                        "reason": None,
                    }
                    rows.append(row)
                    recs_m = by_model_series.get((model, sector))
                    recs_r = by_model_series.get((ref, sector))
                    if recs_m is None or recs_r is None:
                        row["reason"] = "missing run"
                        continue
                    try:
                        em = error_sample_from_records(recs_m, window)
                        er = error_sample_from_records(recs_r, window)
                    except ValueError as exc:
                        row["reason"] = str(exc)
                        continue
                    shared = sorted(set(em.periods) & set(er.periods))
                    if not shared:
                        row["reason"] = "no overlapping origins"
                        continue
                    em = _restrict(em, shared)
                    er = _restrict(er, shared)
                    try:
                        result = dm_statistic(loss_differential(em, er, loss, horizon))
                    except DMError as exc:
                        row["reason"] = str(exc)
                        continue
                    row["p_value"] = result.p_value
                    row["statistic"] = result.statistic
                    row["significant"] = is_significant(result.p_value)
                    row["n"] = result.n
    return rows


def _restrict(e: ErrorSample, periods) -> ErrorSample:
    keep = [i for i, p in enumerate(e.periods) if p in set(periods)]
    return ErrorSample(e.actuals[keep], e.forecasts[keep], tuple(e.periods[i] for i in keep))
