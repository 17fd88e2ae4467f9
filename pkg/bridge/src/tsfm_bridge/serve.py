"""Long-running request loop on stdin/stdout.

One request in flight at a time: read a line, answer it, read the next.
A request that fails validation gets an error response carrying its
request_id and the loop keeps serving; a line the loop cannot even tie to
a request_id is fatal, reported on stderr with a nonzero exit so the
gateway sees a crashed adapter rather than silence.
"""

from __future__ import annotations

import json
import sys

from .backends import AdapterConfig, BackendError, make_backend
from .protocol import (
    ProtocolViolation,
    canonical_json,
    handshake_reply,
    validate_gateway_handshake,
    validate_request,
)


def _emit(stream, obj: dict):
    stream.write(canonical_json(obj) + "\n")
    stream.flush()


def serve(config: AdapterConfig, record_requests: str | None = None, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    try:
        backend = make_backend(config)
    except BackendError as exc:
        print(f"tsfm-bridge: {exc}", file=stderr)
        return 1
    first = stdin.readline()
    if not first:
        print("tsfm-bridge: no handshake received", file=stderr)
        return 1
    try:
        validate_gateway_handshake(json.loads(first))
    except (json.JSONDecodeError, ProtocolViolation) as exc:
        print(f"tsfm-bridge: bad handshake: {exc}", file=stderr)
        return 1
    _emit(stdout, handshake_reply(backend.model_info()))
    recorder = open(record_requests, "w", encoding="utf-8") if record_requests else None
    try:
        for line in stdin:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                print(f"tsfm-bridge: unparseable line: {exc}", file=stderr)
                return 1
            rid = obj.get("request_id") if isinstance(obj, dict) else None
            if not isinstance(rid, str) or not rid:
                print(f"tsfm-bridge: line carries no usable request_id: {line.strip()[:200]}", file=stderr)
                return 1
            try:
                validate_request(obj)
            except ProtocolViolation as exc:
                _emit(stdout, {"type": "error", "request_id": rid, "reason": str(exc)})
                continue
            if recorder is not None:
                recorder.write(canonical_json(obj) + "\n")
                recorder.flush()
            try:
                response = backend.forecast(obj)
            except Exception as exc:  # keep serving; the gateway decides what a lost origin means
                _emit(stdout, {"type": "error", "request_id": rid, "reason": f"backend failure: {exc}"})
                continue
            _emit(stdout, response)
    except BrokenPipeError:
        print("tsfm-bridge: gateway closed the pipe mid-session", file=stderr)
        return 1
    finally:
        if recorder is not None:
            recorder.close()
    return 0
