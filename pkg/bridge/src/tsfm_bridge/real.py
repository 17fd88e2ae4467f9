"""Wrappers around real zero-shot forecasters (Chronos, Moirai, TimeGPT).

Each wrapper is deliberately thin: format the request history, ask the
frozen model for forecasts, reduce samples to a point.  Probabilistic
backends draw a fixed, seeded number of sample paths and report the
per-step median; the sample count and aggregation are recorded in
model_info so fixtures document how their numbers were obtained.

Heavy dependencies import lazily.  A missing package or credential raises
BackendError naming the exact install or setup step, and the command line
exits nonzero instead of surfacing a bare traceback.
"""

from __future__ import annotations

import os
from importlib.metadata import PackageNotFoundError, version

from .backends import AdapterConfig, BackendError, request_seed


def _package_version(dist: str) -> str:
    try:
        return version(dist)
    except PackageNotFoundError:
        return "unknown"


def _history_values(req: dict) -> list[float]:
    return [float(e["value"]) for e in req["history"]]


def _sampled_response(req: dict, sample_matrix, torch) -> dict:
    """Reduce a [samples, horizon] tensor to a point (median) and quantile bands."""
    sample_matrix = sample_matrix.to(torch.float64)
    point = torch.quantile(sample_matrix, 0.5, dim=0).tolist()
    resp = {"type": "response", "request_id": req["request_id"], "point": point}
    qs = req.get("quantiles")
    if qs:
        resp["quantile_bands"] = {
            str(float(q)): torch.quantile(sample_matrix, float(q), dim=0).tolist() for q in qs
        }
    return resp


class ChronosBackend:
    """Amazon Chronos via the chronos-forecasting package, run locally."""

    DEFAULT_VARIANT = "t5-small"

    def __init__(self, config: AdapterConfig):
        try:
            import torch
            from chronos import ChronosPipeline
        except ImportError as exc:
            raise BackendError(
                "the chronos backend needs the 'chronos-forecasting' and 'torch' packages "
                f"(pip install 'tsfm-bridge[chronos]'): {exc}"
            ) from None
        self._torch = torch
        self.variant = config.variant or self.DEFAULT_VARIANT
        self.seed = config.seed
        self.samples = config.samples
        ref = f"amazon/chronos-{self.variant}"
        try:
            self.pipeline = ChronosPipeline.from_pretrained(ref, device_map=config.device)
        except Exception as exc:
            raise BackendError(f"cannot load chronos weights {ref!r}: {exc}") from None
        self.name = f"chronos-{self.variant}"
        self.version = _package_version("chronos-forecasting")

    def model_info(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "point_aggregation": "median",
            "samples": self.samples,
            "seed": self.seed,
        }

    def forecast(self, req: dict) -> dict:
        torch = self._torch
        torch.manual_seed(request_seed(self.seed, req))
        context = torch.tensor(_history_values(req), dtype=torch.float32)
        paths = self.pipeline.predict(
            context,
            prediction_length=req["horizon"],
            num_samples=self.samples,
            limit_prediction_length=False,
        )
        return _sampled_response(req, paths[0], torch)


class MoiraiBackend:
    """Salesforce Moirai via uni2ts, run locally; univariate inputs only."""

    DEFAULT_VARIANT = "small"

    def __init__(self, config: AdapterConfig):
        try:
            import torch
            from uni2ts.model.moirai import MoiraiForecast, MoiraiModule
        except ImportError as exc:
            raise BackendError(
                "the moirai backend needs the 'uni2ts' and 'torch' packages "
                f"(pip install 'tsfm-bridge[moirai]'): {exc}"
            ) from None
        self._torch = torch
        self._forecast_cls = MoiraiForecast
        self.variant = config.variant or self.DEFAULT_VARIANT
        self.seed = config.seed
        self.samples = config.samples
        self.device = config.device
        ref = f"Salesforce/moirai-1.0-R-{self.variant}"
        try:
            self.module = MoiraiModule.from_pretrained(ref)
        except Exception as exc:
            raise BackendError(f"cannot load moirai weights {ref!r}: {exc}") from None
        self.name = f"moirai-{self.variant}"
        self.version = _package_version("uni2ts")

    def model_info(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "point_aggregation": "median",
            "samples": self.samples,
            "seed": self.seed,
        }

    def forecast(self, req: dict) -> dict:
        torch = self._torch
        torch.manual_seed(request_seed(self.seed, req))
        values = _history_values(req)
        model = self._forecast_cls(
            module=self.module,
            prediction_length=req["horizon"],
            context_length=len(values),
            patch_size="auto",
            num_samples=self.samples,
            target_dim=1,
            feat_dynamic_real_dim=0,
            past_feat_dynamic_real_dim=0,
        ).to(self.device)
        past = torch.tensor(values, dtype=torch.float32).reshape(1, -1, 1).to(self.device)
        shape = past.shape[:2]
        with torch.no_grad():
            paths = model(
                past_target=past,
                past_observed_target=torch.ones(*shape, 1, dtype=torch.bool, device=past.device),
                past_is_pad=torch.zeros(shape, dtype=torch.bool, device=past.device),
            )
        return _sampled_response(req, paths[0, :, :, 0] if paths.ndim == 4 else paths[0], torch)


class TimeGPTBackend:
    """Nixtla's hosted TimeGPT API; the key comes from an environment variable."""

    def __init__(self, config: AdapterConfig):
        key = os.environ.get(config.api_key_env)
        if not key:
            raise BackendError(
                f"the timegpt backend needs an API key: set the {config.api_key_env} environment variable"
            )
        try:
            from nixtla import NixtlaClient
        except ImportError as exc:
            raise BackendError(
                f"the timegpt backend needs the 'nixtla' package (pip install 'tsfm-bridge[timegpt]'): {exc}"
            ) from None
        self.client = NixtlaClient(api_key=key)
        self.variant = config.variant or "timegpt-1"
        self.name = "timegpt"
        self.version = _package_version("nixtla")

    def model_info(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "point_aggregation": "api-default",
            "model": self.variant,
        }

    def forecast(self, req: dict) -> dict:
        try:
            import pandas as pd
        except ImportError as exc:
            raise BackendError(f"the timegpt backend needs 'pandas': {exc}") from None
        stamps = pd.PeriodIndex([e["period"] for e in req["history"]], freq="Q").to_timestamp()
        frame = pd.DataFrame(
            {"unique_id": req["series_id"], "ds": stamps, "y": _history_values(req)}
        )
        out = self.client.forecast(df=frame, h=req["horizon"], freq="QS", model=self.variant)
        point = [float(v) for v in out["TimeGPT"].tolist()]
        return {"type": "response", "request_id": req["request_id"], "point": point}
