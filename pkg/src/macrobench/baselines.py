"""Persistence and stepwise seasonal ARIMA baselines fitted in-process.

The ARIMA search follows the familiar stepwise recipe: pick the seasonal
difference D from a seasonal-strength heuristic, the regular difference d
from repeated KPSS level-stationarity tests, evaluate four canonical
starting orders, then hill-climb over unit moves in (p, q, P, Q) and a
constant toggle, scoring candidates by AICc. Estimation maximizes the
exact Gaussian likelihood through a compiled Kalman recursion, warm
started from conditional-sum-of-squares, with coefficients kept
stationary/invertible via a partial-autocorrelation reparameterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal

from ._arma_kernel import arma_filter
from .series import TimeSeries

KPSS_ALPHAS = (0.01, 0.025, 0.05, 0.10)
KPSS_CRITS = (0.739, 0.574, 0.463, 0.347)

SEASONAL_STRENGTH_THRESHOLD = 0.64
AICC_TIE_TOL = 1e-8
MIN_FIT_OBSERVATIONS = 16

_ROOT_TOL = 1e-8
_PENALTY = 1e12


class ArimaError(ValueError):
    pass


class AutoArimaError(ArimaError):
    """Raised when no candidate model could be estimated."""

    def __init__(self, message: str, attempted: list["ArimaSpec"]):
        super().__init__(message)
        self.attempted = attempted


def persistence_forecast(history: TimeSeries, horizon: int) -> np.ndarray:
    """Carry the last observed value forward for every step."""
    if len(history) < 1:
        raise ArimaError("empty history")
    if horizon < 1:
        raise ArimaError(f"horizon must be >= 1, got {horizon}")
    return np.full(horizon, float(history.values[-1]))


@dataclass(frozen=True)
class ArimaSpec:
    p: int
    d: int
    q: int
    P: int = 0
    D: int = 0
    Q: int = 0
    m: int = 4
    with_constant: bool = False

    def __post_init__(self):
        checks = (
            (0 <= self.p <= 5, "p in 0..5"),
            (0 <= self.q <= 5, "q in 0..5"),
            (0 <= self.d <= 2, "d in 0..2"),
            (0 <= self.P <= 2, "P in 0..2"),
            (0 <= self.Q <= 2, "Q in 0..2"),
            (0 <= self.D <= 1, "D in 0..1"),
            (self.m >= 1, "m >= 1"),
        )
        for ok, what in checks:
            if not ok:
                raise ArimaError(f"spec requires {what}: {self}")

    @property
    def n_params(self) -> int:
        return self.p + self.q + self.P + self.Q + (1 if self.with_constant else 0)

    def __str__(self) -> str:
        base = f"({self.p},{self.d},{self.q})"
        seas = f"({self.P},{self.D},{self.Q})[{self.m}]" if self.m > 1 else ""
        return base + seas + ("+c" if self.with_constant else "")


@dataclass(frozen=True)
class ArimaFit:
    spec: ArimaSpec
    ar: tuple[float, ...]
    ma: tuple[float, ...]
    sar: tuple[float, ...]
    sma: tuple[float, ...]
    constant: float
    sigma2: float
    loglik: float
    aicc: float
    n_obs: int

    def __post_init__(self):
        if self.sigma2 <= 0.0:
            raise ArimaError(f"innovation variance must be positive, got {self.sigma2}")
        for coeffs, kind in ((self.ar, "AR"), (self.sar, "seasonal AR")):
            if not _roots_outside_unit_circle(np.array([1.0] + [-c for c in coeffs])):
                raise ArimaError(f"{kind} polynomial not stationary: {coeffs}")
        for coeffs, kind in ((self.ma, "MA"), (self.sma, "seasonal MA")):
            if not _roots_outside_unit_circle(np.array([1.0] + list(coeffs))):
                raise ArimaError(f"{kind} polynomial not invertible: {coeffs}")


def _roots_outside_unit_circle(poly_coeffs: np.ndarray) -> bool:
    if poly_coeffs.size <= 1:
        return True
    roots = np.roots(poly_coeffs[::-1])
    return roots.size == 0 or bool(np.all(np.abs(roots) > 1.0 - _ROOT_TOL))


# ---------------------------------------------------------------------------
# stationarity tests and difference selection


def kpss_statistic(values, n_lags: int | None = None) -> float:
    """KPSS level-stationarity statistic with a Bartlett long-run variance.

    The default truncation is trunc(4 * (n/100)^(1/4)) lags.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise ArimaError(f"KPSS needs at least 2 observations, got {n}")
    e = x - x.mean()
    s = np.cumsum(e)
    eta = float(s @ s) / (n * n)
    if n_lags is None:
        n_lags = int(4.0 * (n / 100.0) ** 0.25)
    s2 = float(e @ e) / n
    for k in range(1, min(n_lags, n - 1) + 1):
        s2 += 2.0 * (1.0 - k / (n_lags + 1.0)) * float(e[k:] @ e[:-k]) / n
    if s2 <= 0.0:
        return 0.0  # constant series: trivially level stationary
    return eta / s2


def kpss_critical_value(alpha: float = 0.05) -> float:
    if not KPSS_ALPHAS[0] <= alpha <= KPSS_ALPHAS[-1]:
        raise ArimaError(f"alpha must lie in [{KPSS_ALPHAS[0]}, {KPSS_ALPHAS[-1]}], got {alpha}")
    return float(np.interp(alpha, KPSS_ALPHAS, KPSS_CRITS))


def select_d(history: TimeSeries, alpha: float = 0.05, max_d: int = 2) -> int:
    """Smallest d whose d-times-differenced series passes the KPSS test."""
    if len(history) < 12:
        raise ArimaError(f"need at least 12 observations, got {len(history)}")
    return _select_d_values(history.values, alpha, max_d)


def _select_d_values(values: np.ndarray, alpha: float, max_d: int) -> int:
    crit = kpss_critical_value(alpha)
    w = np.asarray(values, dtype=float)
    for d in range(max_d + 1):
        if w.size < 8:
            raise ArimaError(f"series too short after differencing ({w.size} < 8 points)")
        if kpss_statistic(w) < crit:
            return d
        w = np.diff(w)
    return max_d


def seasonal_strength(values, m: int = 4) -> float:
    """F_s = max(0, 1 - Var(remainder)/Var(detrended)) from a moving-average
    decomposition; 0 when the series is too short to decompose."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if m < 2 or n < 2 * m + 1:
        return 0.0
    kernel = np.full(m + 1, 1.0 / m)
    kernel[0] = kernel[-1] = 0.5 / m
    trend = np.convolve(x, kernel, mode="valid")
    offset = m // 2
    detrended = x[offset : offset + trend.size] - trend
    qidx = (np.arange(offset, offset + trend.size)) % m
    seasonal = np.array([detrended[qidx == j].mean() for j in range(m)])
    seasonal -= seasonal.mean()
    remainder = detrended - seasonal[qidx]
    var_det = float(np.var(detrended))
    if var_det == 0.0:
        return 0.0
    return max(0.0, 1.0 - float(np.var(remainder)) / var_det)


# ---------------------------------------------------------------------------
# estimation


def _difference(values: np.ndarray, d: int, D: int, m: int) -> np.ndarray:
    w = np.asarray(values, dtype=float)
    for _ in range(D):
        w = w[m:] - w[:-m]
    for _ in range(d):
        w = w[1:] - w[:-1]
    return w


def _pacf_to_coeffs(pacf: np.ndarray) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1,1) to the
    coefficients of a stationary AR polynomial."""
    k = pacf.size
    phi = np.zeros(k)
    for i in range(k):
        r = pacf[i]
        prev = phi[:i].copy()
        phi[i] = r
        for j in range(i):
            phi[j] = prev[j] - r * prev[i - 1 - j]
    return phi


def _expand_ar(ar: np.ndarray, sar: np.ndarray, m: int) -> np.ndarray:
    poly = np.concatenate(([1.0], -ar))
    spoly = np.zeros(sar.size * m + 1)
    spoly[0] = 1.0
    for j in range(sar.size):
        spoly[(j + 1) * m] = -sar[j]
    return -np.polymul(poly, spoly)[1:]


def _expand_ma(ma: np.ndarray, sma: np.ndarray, m: int) -> np.ndarray:
    poly = np.concatenate(([1.0], ma))
    spoly = np.zeros(sma.size * m + 1)
    spoly[0] = 1.0
    for j in range(sma.size):
        spoly[(j + 1) * m] = sma[j]
    return np.polymul(poly, spoly)[1:]


class _ParamMap:
    """Unconstrained optimizer vector <-> natural ARMA coefficients."""

    def __init__(self, spec: ArimaSpec, w_mean: float, w_scale: float):
        self.spec = spec
        self.w_mean = w_mean
        self.w_scale = w_scale if w_scale > 0 else 1.0
        self.size = spec.p + spec.q + spec.P + spec.Q + (1 if spec.with_constant else 0)

    def natural(self, x: np.ndarray):
        spec = self.spec
        i = 0
        ar = _pacf_to_coeffs(np.tanh(x[i : i + spec.p]))
        i += spec.p
        ma = -_pacf_to_coeffs(np.tanh(x[i : i + spec.q]))
        i += spec.q
        sar = _pacf_to_coeffs(np.tanh(x[i : i + spec.P]))
        i += spec.P
        sma = -_pacf_to_coeffs(np.tanh(x[i : i + spec.Q]))
        i += spec.Q
        mu = self.w_mean + x[i] * self.w_scale if spec.with_constant else 0.0
        return ar, ma, sar, sma, mu

    def expanded(self, x: np.ndarray):
        ar, ma, sar, sma, mu = self.natural(x)
        return _expand_ar(ar, sar, self.spec.m), _expand_ma(ma, sma, self.spec.m), mu


def _css(w: np.ndarray, phi_full: np.ndarray, theta_full: np.ndarray) -> float:
    b = np.concatenate(([1.0], -phi_full))
    a = np.concatenate(([1.0], theta_full))
    e = signal.lfilter(b, a, w)
    out = float(e @ e)
    return out if math.isfinite(out) else _PENALTY


def _negloglik(w: np.ndarray, phi_full: np.ndarray, theta_full: np.ndarray) -> float:
    try:
        ok, ssq, sumlogf, _ = arma_filter(w, phi_full, theta_full)
    except np.linalg.LinAlgError:
        # the stationary-covariance solve goes singular at the unit circle
        return _PENALTY
    if not ok or ssq <= 0.0:
        return _PENALTY
    n = w.size
    out = 0.5 * (n * math.log(ssq / n) + sumlogf)
    return out if math.isfinite(out) else _PENALTY


def fit_arima(history: TimeSeries, spec: ArimaSpec) -> ArimaFit:
    """Exact Gaussian MLE for the given order on the given history."""
    y = history.values
    w = _difference(y, spec.d, spec.D, spec.m)
    n = w.size
    if n < 8 or n <= spec.n_params + 1:
        raise ArimaError(f"series too short to fit {spec}: {n} differenced observations")

    if spec.p + spec.q + spec.P + spec.Q == 0:
        mu = float(w.mean()) if spec.with_constant else 0.0
        resid = w - mu
        ssq = float(resid @ resid)
        return _build_fit(spec, np.array([]), np.array([]), np.array([]), np.array([]), mu, ssq, 0.0, n, len(history))

    pmap = _ParamMap(spec, float(w.mean()), float(w.std()))
    x0 = np.zeros(pmap.size)

    def css_objective(x):
        phi_full, theta_full, mu = pmap.expanded(x)
        return _css(w - mu, phi_full, theta_full)

    def ml_objective(x):
        phi_full, theta_full, mu = pmap.expanded(x)
        return _negloglik(w - mu, phi_full, theta_full)

    warm = optimize.minimize(css_objective, x0, method="L-BFGS-B", options={"maxiter": 60})
    start = warm.x if np.all(np.isfinite(warm.x)) else x0
    res = optimize.minimize(ml_objective, start, method="L-BFGS-B", options={"maxiter": 120})
    x = res.x if np.all(np.isfinite(res.x)) else start
    if ml_objective(x) >= _PENALTY:
        raise ArimaError(f"likelihood optimization failed for {spec}")

    phi_full, theta_full, mu = pmap.expanded(x)
    ok, ssq, sumlogf, _ = arma_filter(w - mu, phi_full, theta_full)
    if not ok or ssq <= 0.0:
        raise ArimaError(f"likelihood evaluation failed for {spec}")
    ar, ma, sar, sma, mu = pmap.natural(x)
    return _build_fit(spec, ar, ma, sar, sma, mu, ssq, sumlogf, n, len(history))


def _build_fit(spec, ar, ma, sar, sma, mu, ssq, sumlogf, n, n_obs) -> ArimaFit:
    if ssq <= 0.0:
        raise ArimaError(f"zero residual variance fitting {spec}; series may be deterministic")
    sigma2 = ssq / n
    loglik = -0.5 * (n * (math.log(2.0 * math.pi) + 1.0 + math.log(sigma2)) + sumlogf)
    k = spec.n_params + 1  # + innovation variance
    aic = -2.0 * loglik + 2.0 * k
    denom = n - k - 1
    aicc = aic + 2.0 * k * (k + 1) / denom if denom > 0 else math.inf
    return ArimaFit(
        spec=spec,
        ar=tuple(float(c) for c in ar),
        ma=tuple(float(c) for c in ma),
        sar=tuple(float(c) for c in sar),
        sma=tuple(float(c) for c in sma),
        constant=float(mu),
        sigma2=float(sigma2),
        loglik=float(loglik),
        aicc=float(aicc),
        n_obs=n_obs,
    )


def _full_polys(fit: ArimaFit) -> tuple[np.ndarray, np.ndarray]:
    phi_full = _expand_ar(np.array(fit.ar), np.array(fit.sar), fit.spec.m)
    theta_full = _expand_ma(np.array(fit.ma), np.array(fit.sma), fit.spec.m)
    return phi_full, theta_full


def arima_residuals(fit: ArimaFit, history: TimeSeries) -> np.ndarray:
    """Conditional one-step residuals on the (differenced) training scale,
    pre-sample terms set to zero."""
    w = _difference(history.values, fit.spec.d, fit.spec.D, fit.spec.m)
    phi_full, theta_full = _full_polys(fit)
    b = np.concatenate(([1.0], -phi_full))
    a = np.concatenate(([1.0], theta_full))
    return signal.lfilter(b, a, w - fit.constant)


def arima_fitted(fit: ArimaFit, history: TimeSeries) -> np.ndarray:
    """In-sample one-step predictions aligned to the last n - d - D*m periods."""
    burn = fit.spec.d + fit.spec.D * fit.spec.m
    return history.values[burn:] - arima_residuals(fit, history)


def arima_apply(fit: ArimaFit, history: TimeSeries, horizon: int) -> np.ndarray:
    """Point forecasts from applying the fitted coefficients to `history`.

    Future innovations are zero; the state carries known values and
    residuals. The history may differ from the fitting sample, which is
    what a refit stride greater than one relies on.
    """
    if horizon < 1:
        raise ArimaError(f"horizon must be >= 1, got {horizon}")
    spec = fit.spec
    w = _difference(history.values, spec.d, spec.D, spec.m)
    if w.size < 1:
        raise ArimaError(f"history too short to forecast with {spec}")
    phi_full, theta_full = _full_polys(fit)
    ok, _, _, state = arma_filter(w - fit.constant, phi_full, theta_full)
    if not ok:
        raise ArimaError(f"filter failed applying {spec}")
    r = state.size
    tcol = np.zeros(r)
    tcol[: phi_full.size] = phi_full
    w_hat = np.empty(horizon)
    a = state.copy()
    for h in range(horizon):
        w_hat[h] = fit.constant + a[0]
        a0 = a[0]
        for i in range(r):
            a[i] = tcol[i] * a0 + (a[i + 1] if i + 1 < r else 0.0)
    return _integrate(history.values, spec.d, spec.D, spec.m, w_hat)


def arima_forecast(fit: ArimaFit, history: TimeSeries, horizon: int) -> np.ndarray:
    """Forecast from the history the fit was estimated on (checked via n_obs)."""
    if fit.n_obs != len(history):
        raise ArimaError(
            f"fit was estimated on {fit.n_obs} observations but history has {len(history)}"
        )
    return arima_apply(fit, history, horizon)


def _integrate(values: np.ndarray, d: int, D: int, m: int, w_hat: np.ndarray) -> np.ndarray:
    """Invert the differencing chain to bring forecasts back to levels."""
    layers = [np.asarray(values, dtype=float)]
    cur = layers[0]
    for _ in range(D):
        cur = cur[m:] - cur[:-m]
        layers.append(cur)
    for _ in range(d):
        cur = cur[1:] - cur[:-1]
        layers.append(cur)
    fc = list(w_hat)
    li = len(layers) - 2
    for _ in range(d):
        last = layers[li][-1]
        out = []
        for v in fc:
            last = last + v
            out.append(last)
        fc = out
        li -= 1
    for _ in range(D):
        hist = list(layers[li][-m:])
        out = []
        for v in fc:
            nxt = v + hist[-m]
            hist.append(nxt)
            out.append(nxt)
        fc = out
        li -= 1
    return np.asarray(fc)


# ---------------------------------------------------------------------------
# stepwise search


def auto_arima(
    history: TimeSeries,
    m: int = 4,
    alpha: float = 0.05,
    max_p: int = 5,
    max_q: int = 5,
    max_P: int = 2,
    max_Q: int = 2,
    max_d: int = 2,
    max_D: int = 1,
    seasonal: bool = True,
    log: list | None = None,
) -> ArimaFit:
    """Stepwise order search returning the AICc-best estimable model.

    `log`, when supplied, collects (spec, aicc) for every candidate
    evaluated, in evaluation order. Ties within 1e-8 of the best AICc
    resolve to fewer parameters, then lower q, then lower p.
    """
    if len(history) < MIN_FIT_OBSERVATIONS:
        raise ArimaError(f"need at least {MIN_FIT_OBSERVATIONS} observations, got {len(history)}")
    y = history.values
    seasonal_active = seasonal and m > 1 and max_D + max_P + max_Q > 0
    if seasonal_active and max_D >= 1:
        D = 1 if seasonal_strength(y, m) >= SEASONAL_STRENGTH_THRESHOLD else 0
    else:
        D = 0
    d = _select_d_values(_difference(y, 0, D, m), alpha, max_d)
    allow_constant = (d + D) < 2

    memo: dict[ArimaSpec, tuple[float, ArimaFit | None]] = {}
    attempted: list[ArimaSpec] = []

    def evaluate(spec: ArimaSpec) -> tuple[float, ArimaFit | None]:
        if spec in memo:
            return memo[spec]
        attempted.append(spec)
        try:
            fit = fit_arima(history, spec)
            entry = (fit.aicc, fit)
        except ArimaError:
            entry = (math.inf, None)
        if log is not None:
            log.append((spec, entry[0]))
        memo[spec] = entry
        return entry

    def make_spec(p, q, P, Q, const) -> ArimaSpec | None:
        if not (0 <= p <= max_p and 0 <= q <= max_q):
            return None
        if not (0 <= P <= (max_P if seasonal_active else 0) and 0 <= Q <= (max_Q if seasonal_active else 0)):
            return None
        return ArimaSpec(p, d, q, P, D, Q, m, const and allow_constant)

    starts = [(2, 2, 1, 1), (0, 0, 0, 0), (1, 0, 1, 0), (0, 1, 0, 1)]
    current: ArimaSpec | None = None
    current_aicc = math.inf
    for p, q, P, Q in starts:
        spec = make_spec(min(p, max_p), min(q, max_q), min(P, max_P), min(Q, max_Q), allow_constant)
        if spec is None:
            continue
        aicc, _ = evaluate(spec)
        if aicc < current_aicc:
            current, current_aicc = spec, aicc
    if current is None:
        current = ArimaSpec(0, d, 0, 0, D, 0, m, allow_constant)
        current_aicc, _ = evaluate(current)

    improved = True
    while improved:
        improved = False
        p, q, P, Q, const = current.p, current.q, current.P, current.Q, current.with_constant
        neighbors = []
        for dp in (-1, 1):
            neighbors.append(make_spec(p + dp, q, P, Q, const))
            neighbors.append(make_spec(p, q + dp, P, Q, const))
            if seasonal_active:
                neighbors.append(make_spec(p, q, P + dp, Q, const))
                neighbors.append(make_spec(p, q, P, Q + dp, const))
        if allow_constant:
            neighbors.append(make_spec(p, q, P, Q, not const))
        best_spec, best_aicc = None, current_aicc
        for spec in neighbors:
            if spec is None or spec == current:
                continue
            aicc, _ = evaluate(spec)
            if aicc < best_aicc - AICC_TIE_TOL:
                best_spec, best_aicc = spec, aicc
        if best_spec is not None:
            current, current_aicc = best_spec, best_aicc
            improved = True

    estimable = [(aicc, spec, fit) for spec, (aicc, fit) in memo.items() if fit is not None]
    if not estimable:
        raise AutoArimaError(
            f"no candidate model estimable on series {history.id!r} ({len(attempted)} attempted)",
            attempted,
        )
    best_aicc = min(aicc for aicc, _, _ in estimable)
    contenders = [(spec, fit) for aicc, spec, fit in estimable if aicc <= best_aicc + AICC_TIE_TOL]
    contenders.sort(key=lambda sf: (sf[0].n_params, sf[0].q, sf[0].p, sf[0].Q, sf[0].P, sf[0].with_constant))
    return contenders[0][1]
