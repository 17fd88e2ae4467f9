"""Wire protocol v1: canonical JSON, message validation, fixture keys.

The adapter answers newline-delimited JSON on stdin/stdout.  The gateway
opens with a handshake line, the adapter replies with one, and every later
line is a forecast request that must be answered with a response (or error)
echoing its request_id.  Fixture files pair a content-addressed key with a
recorded response, one JSON object per line, so forecasts replay bit-exactly
without the backend.
"""

from __future__ import annotations

import hashlib
import json
import re

PROTOCOL_VERSION = 1

_PERIOD_RE = re.compile(r"^(\d{4})Q([1-4])$")


class ProtocolViolation(ValueError):
    """A message breaks the wire protocol schema."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def history_hash(history: list[dict]) -> str:
    return hashlib.sha256(canonical_json(history).encode("utf-8")).hexdigest()


def fixture_key(model: str, req: dict) -> dict:
    """Content-addressed replay key for a validated request."""
    return {
        "model": model,
        "series_id": req["series_id"],
        "origin": req["history"][-1]["period"],
        "horizon": req["horizon"],
        "history_hash": history_hash(req["history"]),
    }


def key_digest(key: dict) -> str:
    return hashlib.sha256(canonical_json(key).encode("utf-8")).hexdigest()


def _require(cond: bool, reason: str):
    if not cond:
        raise ProtocolViolation(reason)


def _is_finite_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and abs(float(v)) != float("inf") and float(v) == float(v)


def period_index(text) -> int:
    """Quarter count since 0000Q1 for a YYYYQn label; rejects anything else."""
    m = _PERIOD_RE.match(text) if isinstance(text, str) else None
    if m is None:
        raise ProtocolViolation(f"period {text!r} is not YYYYQn")
    return int(m.group(1)) * 4 + int(m.group(2)) - 1


def validate_gateway_handshake(obj):
    _require(isinstance(obj, dict), "handshake must be a JSON object")
    _require(obj.get("type") == "handshake", f"expected a handshake line, got type={obj.get('type')!r}")
    _require(
        obj.get("protocol_version") == PROTOCOL_VERSION,
        f"unsupported protocol_version {obj.get('protocol_version')!r}",
    )


def handshake_reply(model_info: dict) -> dict:
    """Adapter side of the handshake; the loop is single-threaded, so one in flight."""
    return {
        "type": "handshake",
        "protocol_version": PROTOCOL_VERSION,
        "role": "adapter",
        "model_info": dict(model_info),
        "max_in_flight": 1,
    }


def validate_request(obj):
    _require(isinstance(obj, dict), "request must be a JSON object")
    _require(obj.get("type") == "request", f"type must be 'request', got {obj.get('type')!r}")
    _require(isinstance(obj.get("request_id"), str) and obj["request_id"] != "", "request_id must be a non-empty string")
    _require(isinstance(obj.get("series_id"), str) and obj["series_id"] != "", "series_id must be a non-empty string")
    _require(obj.get("frequency") == "Q", f"frequency must be 'Q', got {obj.get('frequency')!r}")
    history = obj.get("history")
    _require(isinstance(history, list) and history, "history must be a non-empty list")
    prev = None
    for i, entry in enumerate(history):
        _require(isinstance(entry, dict), f"history[{i}] must be an object")
        _require(set(entry) == {"period", "value"}, f"history[{i}] must have exactly period and value")
        try:
            idx = period_index(entry["period"])
        except ProtocolViolation:
            raise ProtocolViolation(f"history[{i}].period {entry.get('period')!r} is not YYYYQn") from None
        _require(_is_finite_number(entry["value"]), f"history[{i}].value must be a finite number")
        if prev is not None:
            _require(idx == prev + 1, f"history[{i}] breaks quarterly contiguity at {entry['period']}")
        prev = idx
    horizon = obj.get("horizon")
    _require(isinstance(horizon, int) and not isinstance(horizon, bool) and horizon >= 1, f"horizon must be an integer >= 1, got {horizon!r}")
    if "quantiles" in obj and obj["quantiles"] is not None:
        qs = obj["quantiles"]
        _require(isinstance(qs, list) and qs, "quantiles must be a non-empty list when present")
        for q in qs:
            _require(_is_finite_number(q) and 0.0 < float(q) < 1.0, f"quantile {q!r} must lie in (0, 1)")


def validate_response(obj, request_id: str | None = None, horizon: int | None = None):
    _require(isinstance(obj, dict), "response must be a JSON object")
    _require(obj.get("type") == "response", f"type must be 'response', got {obj.get('type')!r}")
    _require(isinstance(obj.get("request_id"), str) and obj["request_id"] != "", "request_id must be a non-empty string")
    if request_id is not None:
        _require(obj["request_id"] == request_id, f"request_id {obj['request_id']!r} does not echo {request_id!r}")
    point = obj.get("point")
    _require(isinstance(point, list) and point, "point must be a non-empty list")
    if horizon is not None:
        _require(len(point) == horizon, f"point length {len(point)} != horizon {horizon}")
    for i, v in enumerate(point):
        _require(_is_finite_number(v), f"point[{i}] must be a finite number")
    if "quantile_bands" in obj and obj["quantile_bands"] is not None:
        bands = obj["quantile_bands"]
        _require(isinstance(bands, dict), "quantile_bands must be an object")
        for q, band in bands.items():
            _require(isinstance(band, list) and len(band) == len(point), f"quantile band {q!r} length mismatch")
            for v in band:
                _require(_is_finite_number(v), f"quantile band {q!r} holds a non-finite value")
    if "model_info" in obj and obj["model_info"] is not None:
        info = obj["model_info"]
        _require(isinstance(info, dict), "model_info must be an object")
        _require(isinstance(info.get("name"), str), "model_info.name must be a string")
        _require(isinstance(info.get("version"), str), "model_info.version must be a string")
