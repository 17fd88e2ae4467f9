"""Forecast backends: deterministic stubs plus lazily loaded real models.

Stubs are pure functions of (request, seed) and need no weights or network,
so continuous integration can exercise the full adapter path.  Real backends
live in `real` and import their heavy dependencies only when selected.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from statistics import NormalDist

from .protocol import canonical_json

DEFAULT_SAMPLES = 100
DEFAULT_API_KEY_ENV = "NIXTLA_API_KEY"


class BackendError(RuntimeError):
    """The backend cannot run: unknown name, missing package, or missing credential."""


@dataclass(frozen=True)
class AdapterConfig:
    backend: str
    variant: str | None = None
    device: str = "cpu"
    seed: int = 0
    samples: int = DEFAULT_SAMPLES
    noise_scale: float = 1.0
    api_key_env: str = DEFAULT_API_KEY_ENV


def request_seed(base_seed: int, req: dict) -> int:
    """Deterministic per-request seed; ignores request_id so retries draw alike."""
    material = canonical_json(
        {
            "seed": base_seed,
            "series_id": req["series_id"],
            "history": req["history"],
            "horizon": req["horizon"],
        }
    )
    return int.from_bytes(hashlib.sha256(material.encode("utf-8")).digest()[:8], "big")


def _requested_quantiles(req: dict) -> list[float]:
    qs = req.get("quantiles")
    return [float(q) for q in qs] if qs else []


class SeasonalNaiveStub:
    """Repeats the last seasonal cycle: step h returns the value one cycle back.

    With history y_1..y_n and cycle length m = min(4, n), step h forecasts
    y_{n - m + ((h - 1) mod m) + 1}; horizons past one cycle wrap around.
    Deterministic, so any requested quantile band collapses onto the point.
    """

    name = "stub-seasonal-naive"
    version = "1.0"

    def model_info(self) -> dict:
        return {"name": self.name, "version": self.version}

    def forecast(self, req: dict) -> dict:
        values = [float(e["value"]) for e in req["history"]]
        n = len(values)
        m = n if n < 4 else 4
        point = [values[n - m + ((h - 1) % m)] for h in range(1, req["horizon"] + 1)]
        resp = {"type": "response", "request_id": req["request_id"], "point": point}
        qs = _requested_quantiles(req)
        if qs:
            resp["quantile_bands"] = {str(q): list(point) for q in qs}
        return resp


class NoiseStub:
    """Persistence plus seeded Gaussian noise; a distributional smoke backend.

    Each step adds an independent N(0, scale^2) draw to the last observed
    value.  The generator is seeded from (seed, series payload), so identical
    requests always produce identical output and request_id never matters.
    """

    name = "stub-noise"
    version = "1.0"

    def __init__(self, seed: int = 0, scale: float = 1.0):
        if scale < 0.0:
            raise BackendError(f"noise scale must be >= 0, got {scale}")
        self.seed = seed
        self.scale = scale

    def model_info(self) -> dict:
        return {"name": self.name, "version": self.version, "seed": self.seed, "scale": self.scale}

    def forecast(self, req: dict) -> dict:
        last = float(req["history"][-1]["value"])
        rng = random.Random(request_seed(self.seed, req))
        point = [last + rng.gauss(0.0, self.scale) for _ in range(req["horizon"])]
        resp = {"type": "response", "request_id": req["request_id"], "point": point}
        qs = _requested_quantiles(req)
        if qs:
            normal = NormalDist()
            resp["quantile_bands"] = {
                str(q): [last + self.scale * normal.inv_cdf(q)] * req["horizon"] for q in qs
            }
        return resp


def make_backend(config: AdapterConfig):
    name = config.backend.replace("-", "_").lower()
    if name == "stub_seasonal_naive":
        return SeasonalNaiveStub()
    if name == "stub_noise":
        return NoiseStub(config.seed, config.noise_scale)
    if name in ("chronos", "moirai", "timegpt"):
        from . import real

        cls = {"chronos": real.ChronosBackend, "moirai": real.MoiraiBackend, "timegpt": real.TimeGPTBackend}[name]
        return cls(config)
    raise BackendError(
        f"unknown backend {config.backend!r}; expected one of stub-seasonal-naive, stub-noise, chronos, moirai, timegpt"
    )
