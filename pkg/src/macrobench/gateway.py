"""Gateway to external forecasters over a line-delimited JSON protocol.

Protocol version 1. Each side emits a handshake line on start:

    {"type": "handshake", "protocol_version": 1, "role": "gateway"}
    {"type": "handshake", "protocol_version": 1,
     "model_info": {"name": ..., "version": ...}, "max_in_flight": 1}

Requests and responses are single JSON lines:

    {"type": "request", "request_id": "...", "series_id": "...",
     "frequency": "Q", "history": [{"period": "1999Q3", "value": 5.4}, ...],
     "horizon": 1}
    {"type": "response", "request_id": "...", "point": [...],
     "model_info": {"name": ..., "version": ...}}

Responses may arrive in any order; matching is by request_id. An adapter
may answer a bad request with {"type": "error", "request_id", "reason"}.
The optional `quantiles` request field asks for `quantile_bands` in the
response; `covariates` is reserved and unused. The same payloads work
over HTTP POST for long-lived model servers.

Validated responses are cached in content-addressed JSON files keyed by
(model name+version, series_id, origin, horizon, history hash). Fixture
files are JSON lines of {"key": ..., "response": ...} and can stand in
for a live adapter during replay.
"""

from __future__ import annotations

import hashlib
import json
import os
import selectors
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from collections import deque
from dataclasses import asdict, dataclass

from .series import Period, TimeSeries

PROTOCOL_VERSION = 1

DEFAULT_TIMEOUT = 60.0


class GatewayError(Exception):
    pass


class ProtocolError(GatewayError):
    """Schema violation on either side of the wire."""


class AdapterStartupError(GatewayError):
    pass


class AdapterCrashed(GatewayError):
    pass


class GatewayTimeout(GatewayError):
    pass


class FixtureMiss(GatewayError):
    """Replay adapter has no record for the request."""


class FixtureCorrupt(GatewayError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def history_hash(history: list[dict]) -> str:
    return hashlib.sha256(canonical_json(history).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheKey:
    model: str
    series_id: str
    origin: str
    horizon: int
    history_hash: str

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(asdict(self)).encode("utf-8")).hexdigest()


def _require(cond: bool, reason: str):
    if not cond:
        raise ProtocolError(reason)


def _is_finite_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and abs(float(v)) != float("inf") and float(v) == float(v)


def validate_handshake(obj: dict):
    _require(isinstance(obj, dict), "handshake must be a JSON object")
    _require(obj.get("type") == "handshake", f"expected handshake line, got type={obj.get('type')!r}")
    _require(obj.get("protocol_version") == PROTOCOL_VERSION, f"unsupported protocol_version {obj.get('protocol_version')!r}")


def validate_request(obj: dict):
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
            period = Period.parse(entry["period"])
        except (ValueError, TypeError, AttributeError):
            raise ProtocolError(f"history[{i}].period {entry.get('period')!r} is not YYYYQn") from None
        _require(_is_finite_number(entry["value"]), f"history[{i}].value must be a finite number")
        if prev is not None:
            _require(period.index == prev.index + 1, f"history[{i}] breaks quarterly contiguity at {period}")
        prev = period
    horizon = obj.get("horizon")
    _require(isinstance(horizon, int) and not isinstance(horizon, bool) and horizon >= 1, f"horizon must be an integer >= 1, got {horizon!r}")
    if "quantiles" in obj and obj["quantiles"] is not None:
        qs = obj["quantiles"]
        _require(isinstance(qs, list) and qs, "quantiles must be a non-empty list when present")
        for q in qs:
            _require(_is_finite_number(q) and 0.0 < float(q) < 1.0, f"quantile {q!r} must lie in (0, 1)")


def validate_response(obj: dict, request_id: str | None = None, horizon: int | None = None):
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


def build_request(
    series: TimeSeries,
    origin: Period,
    horizon: int,
    request_id: str | None = None,
    quantiles: list[float] | None = None,
) -> dict:
    """Request payload for the given origin; history never passes the origin."""
    hist = series.up_to(origin)
    if request_id is None:
        request_id = f"{series.id}:{origin}:h{horizon}"
    req = {
        "type": "request",
        "request_id": request_id,
        "series_id": series.id,
        "frequency": "Q",
        "history": [{"period": str(hist.start + i), "value": float(v)} for i, v in enumerate(hist.values)],
        "horizon": int(horizon),
    }
    if quantiles is not None:
        req["quantiles"] = [float(q) for q in quantiles]
    validate_request(req)
    return req


def request_cache_key(req: dict, model: str) -> CacheKey:
    return CacheKey(
        model=model,
        series_id=req["series_id"],
        origin=req["history"][-1]["period"],
        horizon=req["horizon"],
        history_hash=history_hash(req["history"]),
    )


class ForecastCache:
    """Content-addressed response store; one JSON file per cache key."""

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)

    def _path(self, key: CacheKey) -> str:
        return os.path.join(self.directory, key.digest() + ".json")

    def get(self, key: CacheKey) -> dict | None:
        path = self._path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError) as exc:
            raise GatewayError(f"unreadable cache entry {path}: {exc}") from None
        if doc.get("key") != asdict(key):
            raise GatewayError(f"cache digest collision at {path}")
        return doc["response"]

    def put(self, key: CacheKey, response: dict):
        path = self._path(key)
        tmp = path + f".tmp{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"key": asdict(key), "response": response}, fh, sort_keys=True)
        os.replace(tmp, path)


class _LineReader:
    """Deadline-aware line reader over a pipe file descriptor."""

    def __init__(self, fd: int):
        self.fd = fd
        os.set_blocking(fd, False)
        self.selector = selectors.DefaultSelector()
        self.selector.register(fd, selectors.EVENT_READ)
        self.buffer = b""
        self.lines: deque[bytes] = deque()
        self.eof = False

    def readline(self, timeout: float) -> bytes:
        """Next full line, or raise GatewayTimeout / AdapterCrashed on EOF."""
        import time

        deadline = time.monotonic() + timeout
        while True:
            if self.lines:
                return self.lines.popleft()
            if self.eof:
                raise AdapterCrashed("adapter closed its output stream")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise GatewayTimeout(f"no response line within {timeout} s")
            if not self.selector.select(remaining):
                continue
            try:
                chunk = os.read(self.fd, 65536)
            except BlockingIOError:
                continue
            if chunk == b"":
                self.eof = True
                continue
            self.buffer += chunk
            while b"\n" in self.buffer:
                line, self.buffer = self.buffer.split(b"\n", 1)
                self.lines.append(line)

    def close(self):
        self.selector.close()


class SubprocessAdapter:
    """Adapter subprocess speaking protocol v1 on stdin/stdout."""

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT, name: str | None = None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.name = name or argv[0]
        try:
            self.process = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        except OSError as exc:
            raise AdapterStartupError(f"cannot start adapter {argv!r}: {exc}") from None
        self._stderr_tail: deque[bytes] = deque(maxlen=50)
        self._stderr_thread = threading.Thread(target=self._drain_stderr, daemon=True)
        self._stderr_thread.start()
        self.reader = _LineReader(self.process.stdout.fileno())
        self.pending: dict[str, dict] = {}
        self.n_requests = 0
        try:
            self._send({"type": "handshake", "protocol_version": PROTOCOL_VERSION, "role": "gateway"})
            hello = self._read_obj(timeout)
            validate_handshake(hello)
        except GatewayError as exc:
            detail = self.stderr_text()
            self.close()
            raise AdapterStartupError(f"adapter {self.name!r} failed handshake: {exc}" + (f" [stderr: {detail}]" if detail else "")) from None
        info = hello.get("model_info") or {}
        self.model_info = {
            "name": str(info.get("name", self.name)),
            "version": str(info.get("version", "unknown")),
        }
        self.max_in_flight = int(hello.get("max_in_flight", 1))

    def _drain_stderr(self):
        for line in self.process.stderr:
            self._stderr_tail.append(line)

    def stderr_text(self) -> str:
        return b"".join(self._stderr_tail).decode("utf-8", "replace").strip()

    def _send(self, obj: dict):
        if self.process.poll() is not None:
            raise AdapterCrashed(f"adapter {self.name!r} exited with code {self.process.returncode}")
        line = (canonical_json(obj) + "\n").encode("utf-8")
        try:
            self.process.stdin.write(line)
            self.process.stdin.flush()
        except (BrokenPipeError, OSError):
            raise AdapterCrashed(f"adapter {self.name!r} closed its input stream") from None

    def _read_obj(self, timeout: float) -> dict:
        line = self.reader.readline(timeout)
        if not line.strip():
            return self._read_obj(timeout)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"adapter emitted invalid JSON: {exc}: {line[:200]!r}") from None
        if not isinstance(obj, dict):
            raise ProtocolError(f"adapter emitted a non-object line: {line[:200]!r}")
        return obj

    def request(self, req: dict, timeout: float = DEFAULT_TIMEOUT) -> dict:
        rid = req["request_id"]
        self._send(req)
        self.n_requests += 1
        while True:
            if rid in self.pending:
                obj = self.pending.pop(rid)
            else:
                try:
                    obj = self._read_obj(timeout)
                except AdapterCrashed as exc:
                    raise AdapterCrashed(f"{exc} [stderr: {self.stderr_text()}]" if self.stderr_text() else str(exc)) from None
                other = obj.get("request_id")
                if other != rid and isinstance(other, str):
                    self.pending[other] = obj
                    continue
            if obj.get("type") == "error":
                raise ProtocolError(f"adapter error for {rid}: {obj.get('reason', 'unspecified')}")
            return obj

    def close(self):
        if self.process.poll() is None:
            try:
                self.process.stdin.close()
            except OSError:
                pass
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.process.kill()
                self.process.wait()
        self.reader.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class HttpAdapter:
    """Same payloads over HTTP POST; suits long-lived model servers."""

    def __init__(self, url: str, timeout: float = DEFAULT_TIMEOUT, name: str | None = None):
        self.url = url
        self.name = name or url
        self.n_requests = 0
        try:
            hello = self._post({"type": "handshake", "protocol_version": PROTOCOL_VERSION, "role": "gateway"}, timeout)
        except GatewayError as exc:
            raise AdapterStartupError(f"endpoint {url!r} failed handshake: {exc}") from None
        validate_handshake(hello)
        info = hello.get("model_info") or {}
        self.model_info = {
            "name": str(info.get("name", self.name)),
            "version": str(info.get("version", "unknown")),
        }
        self.max_in_flight = int(hello.get("max_in_flight", 1))

    def _post(self, obj: dict, timeout: float) -> dict:
        data = canonical_json(obj).encode("utf-8")
        req = urllib.request.Request(self.url, data=data, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                body = resp.read()
        except urllib.error.URLError as exc:
            if isinstance(getattr(exc, "reason", None), TimeoutError):
                raise GatewayTimeout(f"no response from {self.url} within {timeout} s") from None
            raise AdapterCrashed(f"endpoint {self.url} unreachable: {exc}") from None
        except TimeoutError:
            raise GatewayTimeout(f"no response from {self.url} within {timeout} s") from None
        try:
            out = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"endpoint returned invalid JSON: {exc}") from None
        if not isinstance(out, dict):
            raise ProtocolError("endpoint returned a non-object body")
        return out

    def request(self, req: dict, timeout: float = DEFAULT_TIMEOUT) -> dict:
        self.n_requests += 1
        obj = self._post(req, timeout)
        if obj.get("type") == "error":
            raise ProtocolError(f"adapter error for {req['request_id']}: {obj.get('reason', 'unspecified')}")
        return obj

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class FixtureAdapter:
    """Answers only requests recorded in a fixture file."""

    def __init__(self, path: str):
        self.path = path
        self.records: dict[str, tuple[dict, dict]] = {}
        self.n_requests = 0
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise FixtureCorrupt(f"cannot read fixture {path}: {exc}") from None
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                key_doc = doc["key"]
                response = doc["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FixtureCorrupt(f"{path}:{lineno}: bad fixture record: {exc}") from None
            try:
                key = CacheKey(**key_doc)
            except TypeError as exc:
                raise FixtureCorrupt(f"{path}:{lineno}: bad cache key: {exc}") from None
            digest = key.digest()
            if digest in self.records and self.records[digest][0] != key_doc:
                raise FixtureCorrupt(f"{path}:{lineno}: digest collision between distinct keys")
            self.records[digest] = (key_doc, response)
        if not self.records:
            raise FixtureCorrupt(f"fixture {path} holds no records")
        first_key = next(iter(self.records.values()))[0]
        self.model_string = first_key["model"]
        name, _, version = self.model_string.partition("@")
        self.model_info = {"name": name, "version": version or "unknown"}
        self.max_in_flight = 1

    def request(self, req: dict, timeout: float = DEFAULT_TIMEOUT) -> dict:
        self.n_requests += 1
        key = request_cache_key(req, model=self.model_string)
        entry = self.records.get(key.digest())
        if entry is None or entry[0] != asdict(key):
            raise FixtureMiss(
                f"fixture {self.path} has no record for series {req['series_id']!r} "
                f"origin {key.origin} horizon {key.horizon}"
            )
        response = dict(entry[1])
        response["request_id"] = req["request_id"]
        return response

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def first_model(model_info: dict) -> str:
    return f"{model_info['name']}@{model_info['version']}"


def replay_fixture(path: str) -> FixtureAdapter:
    return FixtureAdapter(path)


class Gateway:
    """Serialized, cached, schema-checked access to one adapter."""

    def __init__(
        self,
        adapter,
        cache: ForecastCache | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        record_path: str | None = None,
    ):
        self.adapter = adapter
        self.cache = cache
        self.timeout = timeout
        self.record_path = record_path
        self._lock = threading.Lock()
        self._recorded: set[str] = set()

    @property
    def model(self) -> str:
        explicit = getattr(self.adapter, "model_string", None)
        return explicit or first_model(self.adapter.model_info)

    def request_forecast(self, req: dict, timeout: float | None = None) -> dict:
        validate_request(req)
        key = request_cache_key(req, self.model)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                validate_response(cached, horizon=req["horizon"])
                self._record(key, cached)
                return cached
        with self._lock:
            response = self.adapter.request(req, timeout or self.timeout)
        validate_response(response, request_id=req["request_id"], horizon=req["horizon"])
        if self.cache is not None:
            self.cache.put(key, response)
        self._record(key, response)
        return response

    def _record(self, key: CacheKey, response: dict):
        if self.record_path is None:
            return
        digest = key.digest()
        if digest in self._recorded:
            return
        self._recorded.add(digest)
        with self._lock:
            with open(self.record_path, "a", encoding="utf-8") as fh:
                fh.write(canonical_json({"key": asdict(key), "response": response}) + "\n")

    def close(self):
        self.adapter.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
