"""Shared helpers: request builders plus a raw protocol session over pipes."""

import json
import random
import subprocess
import sys

import pytest

GATEWAY_HELLO = {"type": "handshake", "protocol_version": 1, "role": "gateway"}


def make_history(seed: int, n: int, start_year: int = 1999, start_quarter: int = 1) -> list[dict]:
    rng = random.Random(seed)
    idx = start_year * 4 + start_quarter - 1
    out = []
    level = rng.uniform(-5.0, 5.0)
    for _ in range(n):
        level += rng.uniform(-2.0, 2.0)
        out.append({"period": f"{idx // 4}Q{idx % 4 + 1}", "value": level})
        idx += 1
    return out


def make_request(seed: int, n: int = 12, horizon: int = 2, series_id: str = "gdp", request_id: str | None = None, quantiles: list[float] | None = None) -> dict:
    req = {
        "type": "request",
        "request_id": request_id or f"{series_id}:{seed}:h{horizon}",
        "series_id": series_id,
        "frequency": "Q",
        "history": make_history(seed, n),
        "horizon": horizon,
    }
    if quantiles is not None:
        req["quantiles"] = quantiles
    return req


class BridgeProcess:
    """tsfm-bridge serve as a subprocess, spoken to line by line."""

    def __init__(self, *args: str, hello: dict | None = GATEWAY_HELLO):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "tsfm_bridge", "serve", *args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        self.hello_reply = self.ask(hello) if hello is not None else None

    def send(self, obj: dict):
        self.proc.stdin.write(json.dumps(obj) + "\n")
        self.proc.stdin.flush()

    def send_raw(self, text: str):
        self.proc.stdin.write(text)
        self.proc.stdin.flush()

    def read(self) -> dict:
        line = self.proc.stdout.readline()
        assert line, "adapter closed stdout unexpectedly"
        return json.loads(line)

    def read_raw(self) -> str:
        line = self.proc.stdout.readline()
        assert line, "adapter closed stdout unexpectedly"
        return line

    def ask(self, obj: dict) -> dict:
        self.send(obj)
        return self.read()

    def finish(self, timeout: float = 10.0) -> tuple[int, str]:
        # communicate() closes stdin, drains stdout, and reaps the process
        _, err = self.proc.communicate(timeout=timeout)
        return self.proc.returncode, err

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.communicate()


@pytest.fixture
def seasonal_serve():
    proc = BridgeProcess("--backend", "stub-seasonal-naive")
    yield proc
    proc.kill()
