"""Reference forecast adapter speaking the gateway wire protocol v1.

Deterministic stub backends keep evaluation pipelines free of model weights
and network access; optional wrappers call real zero-shot forecasters
(Chronos, Moirai, TimeGPT) with frozen parameters and history-only inputs.
`tsfm-bridge serve` answers requests on stdin/stdout; `tsfm-bridge post`
runs a backend over a saved request stream and emits a fixture the
evaluation gateway replays bit-exactly.
"""

from .backends import (
    DEFAULT_API_KEY_ENV,
    DEFAULT_SAMPLES,
    AdapterConfig,
    BackendError,
    NoiseStub,
    SeasonalNaiveStub,
    make_backend,
    request_seed,
)
from .cli import main
from .post import run_post
from .protocol import (
    PROTOCOL_VERSION,
    ProtocolViolation,
    canonical_json,
    fixture_key,
    handshake_reply,
    history_hash,
    key_digest,
    period_index,
    validate_gateway_handshake,
    validate_request,
    validate_response,
)
from .serve import serve

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_API_KEY_ENV",
    "DEFAULT_SAMPLES",
    "PROTOCOL_VERSION",
    "AdapterConfig",
    "BackendError",
    "NoiseStub",
    "ProtocolViolation",
    "SeasonalNaiveStub",
    "canonical_json",
    "fixture_key",
    "handshake_reply",
    "history_hash",
    "key_digest",
    "main",
    "make_backend",
    "period_index",
    "request_seed",
    "run_post",
    "serve",
    "validate_gateway_handshake",
    "validate_request",
    "validate_response",
]
