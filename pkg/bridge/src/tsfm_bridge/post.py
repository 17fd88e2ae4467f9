"""Offline fixture builder: run a backend over a saved request stream.

Reads newline-delimited requests (as captured by `serve --record-requests`),
answers each with the configured backend, and writes the gateway's replay
fixture format: one `{"key": ..., "response": ...}` object per line, keyed
by (model, series_id, origin, horizon, history hash).  Duplicate requests
collapse to one record, matching how the gateway records live sessions.
"""

from __future__ import annotations

import json
import sys

from .backends import AdapterConfig, BackendError, make_backend
from .protocol import (
    ProtocolViolation,
    canonical_json,
    fixture_key,
    key_digest,
    validate_request,
    validate_response,
)

EXIT_OK = 0
EXIT_BACKEND = 1
EXIT_STREAM = 2


def run_post(config: AdapterConfig, requests_path: str, out_path: str, stdout=None, stderr=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    try:
        backend = make_backend(config)
    except BackendError as exc:
        print(f"tsfm-bridge: {exc}", file=stderr)
        return EXIT_BACKEND
    try:
        with open(requests_path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        print(f"tsfm-bridge: cannot read request stream {requests_path}: {exc}", file=stderr)
        return EXIT_STREAM
    requests = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            validate_request(obj)
        except (json.JSONDecodeError, ProtocolViolation) as exc:
            print(f"tsfm-bridge: {requests_path}:{lineno}: bad request: {exc}", file=stderr)
            return EXIT_STREAM
        requests.append(obj)
    if not requests:
        print(f"tsfm-bridge: request stream {requests_path} holds no requests", file=stderr)
        return EXIT_STREAM
    info = backend.model_info()
    model = f"{info['name']}@{info['version']}"
    records: dict[str, str] = {}
    for req in requests:
        try:
            response = backend.forecast(req)
        except Exception as exc:
            print(f"tsfm-bridge: backend failed on request {req['request_id']!r}: {exc}", file=stderr)
            return EXIT_BACKEND
        try:
            validate_response(response, request_id=req["request_id"], horizon=req["horizon"])
        except ProtocolViolation as exc:
            print(f"tsfm-bridge: backend emitted an invalid response for {req['request_id']!r}: {exc}", file=stderr)
            return EXIT_BACKEND
        key = fixture_key(model, req)
        records.setdefault(key_digest(key), canonical_json({"key": key, "response": response}))
    with open(out_path, "w", encoding="utf-8") as fh:
        for line in records.values():
            fh.write(line + "\n")
    print(f"wrote {len(records)} fixture records to {out_path} (model {model})", file=stdout)
    return EXIT_OK
