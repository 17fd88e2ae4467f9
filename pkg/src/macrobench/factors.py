"""Principal-components factor extraction with VAR dynamics for forecasting.

A standardized N-series panel X (T x N) is decomposed as X ~ F L' with
factors normalized so (1/T) F'F = I. Factor dynamics follow a VAR(p)
estimated by least squares without intercept (factors are mean zero by
construction); forecasts iterate the VAR with zero innovations and
de-standardize through the target's loading row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .series import TimeSeries

FIT_FORMAT = "factor-fit/1"

RANK_TOL = 1e-10


class FactorError(ValueError):
    pass


@dataclass
class FactorPanel:
    series: list[TimeSeries]
    values: np.ndarray  # T x N raw
    means: np.ndarray
    stds: np.ndarray
    standardized: bool = True

    @classmethod
    def from_series(cls, series: list[TimeSeries]) -> "FactorPanel":
        if len(series) < 2:
            raise FactorError(f"panel needs at least 2 series, got {len(series)}")
        first = series[0]
        for s in series[1:]:
            if s.start != first.start or len(s) != len(first):
                raise FactorError(
                    f"series {s.id!r} span {s.start}..{s.end} does not match {first.id!r} "
                    f"span {first.start}..{first.end}"
                )
        values = np.column_stack([s.values for s in series])
        means = values.mean(axis=0)
        stds = values.std(axis=0)  # population scaling
        for s, sd in zip(series, stds):
            if sd == 0.0:
                raise FactorError(f"series {s.id!r} is constant; cannot standardize")
        return cls(series=list(series), values=values, means=means, stds=stds)

    @property
    def n_series(self) -> int:
        return self.values.shape[1]

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    def standardized_values(self) -> np.ndarray:
        return (self.values - self.means) / self.stds

    def index_of(self, series_id: str) -> int:
        for i, s in enumerate(self.series):
            if s.id == series_id:
                return i
        raise FactorError(f"series {series_id!r} not in panel")


@dataclass
class FactorFit:
    r: int
    loadings: np.ndarray  # N x r
    factors: np.ndarray  # T x r
    explained_shares: np.ndarray  # per extracted factor, eigenvalue / total
    means: np.ndarray
    stds: np.ndarray
    series_ids: list[str]
    var_order: int = 0
    var_coeffs: list[np.ndarray] = field(default_factory=list)
    innovation_cov: np.ndarray | None = None
    spectral_radius: float = 0.0


def default_r(panel: FactorPanel, threshold: float = 0.80, cap: int = 8) -> int:
    """Smallest r with cumulative explained variance >= threshold, capped."""
    eigvals = _panel_eigvals(panel)
    shares = np.cumsum(eigvals) / np.sum(eigvals)
    upper = min(panel.n_series - 1, cap)
    for r in range(1, upper + 1):
        if shares[r - 1] >= threshold:
            return r
    return upper


def _panel_eigvals(panel: FactorPanel) -> np.ndarray:
    Z = panel.standardized_values()
    T, N = Z.shape
    gram = (Z.T @ Z) / T if N <= T else (Z @ Z.T) / T
    eigvals = np.linalg.eigvalsh(gram)[::-1]
    return np.clip(eigvals, 0.0, None)


def extract_factors(panel: FactorPanel, r: int) -> FactorFit:
    """Principal-components factors under the normalization (1/T) F'F = I."""
    Z = panel.standardized_values()
    T, N = Z.shape
    if not 1 <= r <= N:
        raise FactorError(f"need 1 <= r <= N={N}, got r={r}")
    if T <= r:
        raise FactorError(f"need more periods than factors, got T={T}, r={r}")
    if N <= T:
        gram = (Z.T @ Z) / T
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.clip(eigvals[order], 0.0, None)
        effective_rank = int(np.sum(eigvals > RANK_TOL * max(eigvals[0], 1.0)))
        if effective_rank < r:
            raise FactorError(f"panel has effective rank {effective_rank}, cannot extract r={r} factors")
        V = eigvecs[:, order[:r]]
        factors = Z @ V / np.sqrt(eigvals[:r])
    else:
        gram = (Z @ Z.T) / T
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.clip(eigvals[order], 0.0, None)
        effective_rank = int(np.sum(eigvals > RANK_TOL * max(eigvals[0], 1.0)))
        if effective_rank < r:
            raise FactorError(f"panel has effective rank {effective_rank}, cannot extract r={r} factors")
        factors = eigvecs[:, order[:r]] * np.sqrt(T)
    loadings = Z.T @ factors / T  # least squares given (1/T) F'F = I
    # sign convention: largest-magnitude loading of each factor is positive
    for i in range(r):
        j = int(np.argmax(np.abs(loadings[:, i])))
        if loadings[j, i] < 0:
            loadings[:, i] = -loadings[:, i]
            factors[:, i] = -factors[:, i]
    total = float(np.sum(_panel_eigvals(panel)))
    shares = eigvals[:r] / total
    return FactorFit(
        r=r,
        loadings=loadings,
        factors=factors,
        explained_shares=shares,
        means=panel.means.copy(),
        stds=panel.stds.copy(),
        series_ids=[s.id for s in panel.series],
    )


def fit_factor_var(fit: FactorFit, p: int) -> FactorFit:
    """Least-squares VAR(p) on the factors, no intercept; completes the fit."""
    F = fit.factors
    T, r = F.shape
    if p < 0:
        raise FactorError(f"VAR order must be >= 0, got {p}")
    if T <= r * p + 1:
        raise FactorError(f"need T > r*p + 1, got T={T}, r={r}, p={p}")
    if p == 0:
        fit.var_order = 0
        fit.var_coeffs = []
        fit.innovation_cov = F.T @ F / T
        fit.spectral_radius = 0.0
        return fit
    Y = F[p:]
    X = np.hstack([F[p - j : T - j] for j in range(1, p + 1)])
    coeffs, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
    if rank < r * p:
        raise FactorError(f"singular VAR regressor matrix (rank {rank} < {r * p})")
    fit.var_order = p
    fit.var_coeffs = [coeffs[(j - 1) * r : j * r].T for j in range(1, p + 1)]
    residuals = Y - X @ coeffs
    fit.innovation_cov = residuals.T @ residuals / residuals.shape[0]
    fit.spectral_radius = _companion_radius(fit.var_coeffs, r)
    return fit


def _companion_radius(var_coeffs: list[np.ndarray], r: int) -> float:
    p = len(var_coeffs)
    if p == 0:
        return 0.0
    companion = np.zeros((r * p, r * p))
    for j, Phi in enumerate(var_coeffs):
        companion[:r, j * r : (j + 1) * r] = Phi
    if p > 1:
        companion[r:, : r * (p - 1)] = np.eye(r * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(companion))))


def select_var_order(fit: FactorFit, max_p: int = 4) -> int:
    """Smallest-AIC VAR order in 1..max_p (multivariate Gaussian AIC)."""
    F = fit.factors
    T, r = F.shape
    best_p, best_aic = 1, np.inf
    for p in range(1, max_p + 1):
        if T <= r * p + 1:
            break
        Y = F[p:]
        X = np.hstack([F[p - j : T - j] for j in range(1, p + 1)])
        coeffs, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
        if rank < r * p:
            continue
        resid = Y - X @ coeffs
        n_eff = resid.shape[0]
        sigma = resid.T @ resid / n_eff
        sign, logdet = np.linalg.slogdet(sigma)
        if sign <= 0:
            continue
        aic = logdet + 2.0 * (p * r * r) / n_eff
        if aic < best_aic - 1e-12:
            best_aic, best_p = aic, p
    return best_p


def factor_forecast(fit: FactorFit, target_index: int, horizon: int) -> np.ndarray:
    """Iterate the factor VAR with zero innovations, then de-standardize."""
    if horizon < 1:
        raise FactorError(f"horizon must be >= 1, got {horizon}")
    if not 0 <= target_index < len(fit.series_ids):
        raise FactorError(f"target index {target_index} out of range")
    F = fit.factors
    r = fit.r
    p = fit.var_order
    lags = [F[-j] for j in range(1, p + 1)]  # lags[0] = F_T
    out = np.empty(horizon)
    lam = fit.loadings[target_index]
    for h in range(horizon):
        if p == 0:
            f_next = np.zeros(r)
        else:
            f_next = np.zeros(r)
            for j in range(p):
                f_next += fit.var_coeffs[j] @ lags[j]
            lags = [f_next] + lags[: p - 1]
        out[h] = fit.means[target_index] + fit.stds[target_index] * float(lam @ f_next)
    return out


def fit_to_json(fit: FactorFit) -> str:
    doc = {
        "format": FIT_FORMAT,
        "r": fit.r,
        "series_ids": fit.series_ids,
        "loadings": fit.loadings.tolist(),
        "factors": fit.factors.tolist(),
        "explained_shares": fit.explained_shares.tolist(),
        "means": fit.means.tolist(),
        "stds": fit.stds.tolist(),
        "var_order": fit.var_order,
        "var_coeffs": [m.tolist() for m in fit.var_coeffs],
        "innovation_cov": None if fit.innovation_cov is None else fit.innovation_cov.tolist(),
        "spectral_radius": fit.spectral_radius,
    }
    return json.dumps(doc, sort_keys=True)


def fit_from_json(text: str) -> FactorFit:
    doc = json.loads(text)
    if doc.get("format") != FIT_FORMAT:
        raise FactorError(f"unsupported fit format {doc.get('format')!r}")
    fit = FactorFit(
        r=int(doc["r"]),
        loadings=np.asarray(doc["loadings"], dtype=float),
        factors=np.asarray(doc["factors"], dtype=float),
        explained_shares=np.asarray(doc["explained_shares"], dtype=float),
        means=np.asarray(doc["means"], dtype=float),
        stds=np.asarray(doc["stds"], dtype=float),
        series_ids=list(doc["series_ids"]),
        var_order=int(doc["var_order"]),
        var_coeffs=[np.asarray(m, dtype=float) for m in doc["var_coeffs"]],
        spectral_radius=float(doc["spectral_radius"]),
    )
    if doc["innovation_cov"] is not None:
        fit.innovation_cov = np.asarray(doc["innovation_cov"], dtype=float)
    return fit
