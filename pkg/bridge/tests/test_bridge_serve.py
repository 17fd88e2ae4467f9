"""Protocol conformance of the serve loop, exercised over real pipes."""

import json

import pytest
from conftest import GATEWAY_HELLO, BridgeProcess, make_request

from tsfm_bridge import canonical_json


class TestHandshake:
    def test_reply_shape(self, seasonal_serve):
        reply = seasonal_serve.hello_reply
        assert reply["type"] == "handshake"
        assert reply["protocol_version"] == 1
        assert reply["role"] == "adapter"
        assert reply["max_in_flight"] == 1
        assert reply["model_info"]["name"] == "stub-seasonal-naive"
        assert reply["model_info"]["version"] == "1.0"

    def test_wrong_protocol_version_is_fatal(self):
        proc = BridgeProcess("--backend", "stub-seasonal-naive", hello=None)
        proc.send({"type": "handshake", "protocol_version": 2, "role": "gateway"})
        code, err = proc.finish()
        assert code != 0
        assert "protocol_version" in err

    def test_non_handshake_first_line_is_fatal(self):
        proc = BridgeProcess("--backend", "stub-seasonal-naive", hello=None)
        proc.send(make_request(1))
        code, err = proc.finish()
        assert code != 0
        assert "handshake" in err

    def test_eof_before_handshake_is_fatal(self):
        proc = BridgeProcess("--backend", "stub-seasonal-naive", hello=None)
        code, err = proc.finish()
        assert code != 0
        assert "no handshake" in err


class TestRequests:
    def test_answers_in_order(self, seasonal_serve):
        for i in range(3):
            req = make_request(i, request_id=f"r{i}")
            resp = seasonal_serve.ask(req)
            assert resp["type"] == "response"
            assert resp["request_id"] == f"r{i}"
            assert len(resp["point"]) == req["horizon"]

    def test_blank_lines_are_ignored(self, seasonal_serve):
        seasonal_serve.send_raw("\n   \n")
        assert seasonal_serve.ask(make_request(4))["type"] == "response"

    def test_clean_exit_on_eof(self, seasonal_serve):
        seasonal_serve.ask(make_request(0))
        code, err = seasonal_serve.finish()
        assert code == 0
        assert err == ""


BAD_REQUESTS = [
    ("horizon zero", {"horizon": 0}, "horizon"),
    ("horizon bool", {"horizon": True}, "horizon"),
    ("bad frequency", {"frequency": "M"}, "frequency"),
    ("empty history", {"history": []}, "history"),
    ("empty series id", {"series_id": ""}, "series_id"),
    ("quantile out of range", {"quantiles": [1.5]}, "quantile"),
    ("wrong type", {"type": "forecast"}, "type"),
]


class TestErrorResponses:
    @pytest.mark.parametrize("label,patch,fragment", BAD_REQUESTS, ids=[b[0] for b in BAD_REQUESTS])
    def test_invalid_request_gets_error_and_loop_survives(self, seasonal_serve, label, patch, fragment):
        req = {**make_request(1, request_id="bad"), **patch}
        resp = seasonal_serve.ask(req)
        assert resp["type"] == "error"
        assert resp["request_id"] == "bad"
        assert fragment in resp["reason"]
        assert seasonal_serve.ask(make_request(2))["type"] == "response"

    def test_contiguity_break_gets_error(self, seasonal_serve):
        req = make_request(1, request_id="gap")
        req["history"][3]["period"] = "2050Q1"
        resp = seasonal_serve.ask(req)
        assert resp["type"] == "error"
        assert "contiguity" in resp["reason"]

    def test_non_numeric_value_gets_error(self, seasonal_serve):
        req = make_request(1, request_id="nan")
        req["history"][0]["value"] = "not-a-number"
        resp = seasonal_serve.ask(req)
        assert resp["type"] == "error"
        assert "finite" in resp["reason"]

    def test_bad_period_gets_error(self, seasonal_serve):
        req = make_request(1, request_id="per")
        req["history"][0]["period"] = "1999-03"
        resp = seasonal_serve.ask(req)
        assert resp["type"] == "error"
        assert "YYYYQn" in resp["reason"]


class TestFatalLines:
    def test_unparseable_json_is_fatal(self, seasonal_serve):
        seasonal_serve.send_raw("this is not json\n")
        code, err = seasonal_serve.finish()
        assert code != 0
        assert "unparseable" in err

    def test_missing_request_id_is_fatal(self, seasonal_serve):
        seasonal_serve.send({"type": "request"})
        code, err = seasonal_serve.finish()
        assert code != 0
        assert "request_id" in err

    def test_non_object_line_is_fatal(self, seasonal_serve):
        seasonal_serve.send_raw("[1,2,3]\n")
        code, err = seasonal_serve.finish()
        assert code != 0
        assert "request_id" in err


class TestNoiseDeterminism:
    def test_same_seed_across_processes_is_byte_identical(self):
        req = make_request(3, horizon=4)
        lines = []
        for _ in range(2):
            proc = BridgeProcess("--backend", "stub-noise", "--seed", "5")
            proc.send(req)
            lines.append(proc.read_raw())
            proc.finish()
        assert lines[0] == lines[1]

    def test_different_seed_differs(self):
        req = make_request(3, horizon=4)
        points = []
        for seed in ("5", "6"):
            proc = BridgeProcess("--backend", "stub-noise", "--seed", seed)
            points.append(proc.ask(req)["point"])
            proc.finish()
        assert points[0] != points[1]


class TestRecordRequests:
    def test_only_valid_requests_are_recorded(self, tmp_path):
        stream = tmp_path / "requests.ndjson"
        proc = BridgeProcess("--backend", "stub-seasonal-naive", "--record-requests", str(stream))
        good = [make_request(1, request_id="a"), make_request(2, request_id="b")]
        proc.ask(good[0])
        proc.ask({**make_request(3, request_id="broken"), "horizon": 0})
        proc.ask(good[1])
        code, _ = proc.finish()
        assert code == 0
        recorded = stream.read_text().splitlines()
        assert recorded == [canonical_json(r) for r in good]

    def test_recorded_stream_is_valid_json_lines(self, tmp_path):
        stream = tmp_path / "requests.ndjson"
        proc = BridgeProcess("--backend", "stub-seasonal-naive", "--record-requests", str(stream))
        proc.ask(make_request(1))
        proc.finish()
        for line in stream.read_text().splitlines():
            assert json.loads(line)["type"] == "request"


class TestUnavailableBackend:
    def test_serve_exits_nonzero_without_credential(self, monkeypatch):
        import subprocess
        import sys

        env_name = "NIXTLA_API_KEY"
        monkeypatch.delenv(env_name, raising=False)
        proc = subprocess.run(
            [sys.executable, "-m", "tsfm_bridge", "serve", "--backend", "timegpt"],
            input=json.dumps(GATEWAY_HELLO) + "\n",
            capture_output=True,
            text=True,
            timeout=30,
        )
        assert proc.returncode != 0
        assert env_name in proc.stderr
