"""End-to-end CLI behaviour: exit codes, artifacts, config precedence."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from macrobench import Gateway, Period, SubprocessAdapter, build_request, to_csv
from macrobench.cli import main

from .conftest import growthish_series

ARTIFACTS = ("runs.json", "report.json", "report.md", "dm_grid.csv", "robustness.csv")


def write_data(tmp_path, n=60, sids=("gdp", "mfg"), name="data.csv"):
    series = [growthish_series(31 + i, n, sid=sid) for i, sid in enumerate(sids)]
    path = tmp_path / name
    path.write_text(to_csv(series))
    return path


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestIngest:
    def test_valid_file(self, tmp_path, capsys):
        data = write_data(tmp_path)
        code, out, err = run_cli(["ingest", "--data", data], capsys)
        assert code == 0
        assert "gdp: 1999Q1..2013Q4 (60 observations)" in out
        assert "contiguous" in out

    def test_json_format(self, tmp_path, capsys):
        data = write_data(tmp_path)
        code, out, _ = run_cli(["ingest", "--data", data, "--format", "json"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert {d["series_id"] for d in doc} == {"gdp", "mfg"}
        assert all(d["n"] == 60 and d["unit"] == "yoy_percent" for d in doc)

    def test_bad_csv_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("period,series_id,value\n2000Q1,gdp,1.0\n2000Q3,gdp,2.0\n")
        code, _, err = run_cli(["ingest", "--data", path], capsys)
        assert code == 2
        assert "error:" in err

    def test_missing_file_exits_2(self, tmp_path, capsys):
        code, _, err = run_cli(["ingest", "--data", tmp_path / "nope.csv"], capsys)
        assert code == 2
        assert "cannot read" in err


def backtest_argv(data, out, **kw):
    argv = [
        "backtest",
        "--data",
        data,
        "--models",
        kw.pop("models", "persistence,lsboost"),
        "--first-origin",
        kw.pop("first_origin", "2008Q1"),
        "--last-origin",
        kw.pop("last_origin", "2012Q4"),
        "--slices",
        kw.pop("slices", "full=2008Q2:2013Q1"),
        "--out",
        out,
        "--seed",
        "0",
    ]
    for key, value in kw.items():
        argv += [f"--{key.replace('_', '-')}", str(value)]
    return argv


class TestBacktest:
    def test_writes_all_artifacts(self, tmp_path, capsys):
        data = write_data(tmp_path)
        out = tmp_path / "out"
        code, stdout, _ = run_cli(backtest_argv(data, out), capsys)
        assert code == 0
        for name in ARTIFACTS:
            assert (out / name).exists(), name
        assert "wrote 5 artifacts" in stdout
        report = json.loads((out / "report.json").read_text())
        assert sorted(report["models"]) == ["lsboost", "persistence"]
        assert report["config"]["first_origin"] == "2008Q1"
        assert "timeout" not in report["config"]

    def test_repeat_runs_are_byte_identical(self, tmp_path, capsys):
        data = write_data(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli(backtest_argv(data, out1), capsys)[0] == 0
        assert run_cli(backtest_argv(data, out2), capsys)[0] == 0
        for name in ARTIFACTS:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        data = write_data(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"models": ["persistence"], "horizon": 2, "seed": 7}))
        out = tmp_path / "out"
        code, _, _ = run_cli(
            [
                "backtest",
                "--data",
                data,
                "--config",
                cfg,
                "--horizon",
                "1",
                "--first-origin",
                "2008Q1",
                "--last-origin",
                "2012Q4",
                "--slices",
                "full=2008Q2:2013Q1",
                "--out",
                out,
            ],
            capsys,
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["models"] == ["persistence"]
        assert report["config"]["horizon"] == 1  # flag beats the file
        assert report["config"]["seed"] == 7  # file beats the default

    def test_toml_config(self, tmp_path, capsys):
        data = write_data(tmp_path)
        cfg = tmp_path / "cfg.toml"
        cfg.write_text('models = ["persistence"]\nmase_m = 4\n')
        out = tmp_path / "out"
        code, _, _ = run_cli(
            ["backtest", "--data", data, "--config", cfg, "--first-origin", "2008Q1",
             "--last-origin", "2012Q4", "--slices", "full=2008Q2:2013Q1", "--out", out],
            capsys,
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["mase_m"] == 4

    def test_unknown_config_key_exits_4(self, tmp_path, capsys):
        data = write_data(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"modles": ["persistence"]}))
        code, _, err = run_cli(
            ["backtest", "--data", data, "--config", cfg, "--out", tmp_path / "out"], capsys
        )
        assert code == 4
        assert "unknown config key" in err

    def test_unknown_model_exits_4(self, tmp_path, capsys):
        data = write_data(tmp_path)
        code, _, err = run_cli(backtest_argv(data, tmp_path / "out", models="tide"), capsys)
        assert code == 4
        assert "unknown model" in err

    def test_bad_origin_exits_4(self, tmp_path, capsys):
        data = write_data(tmp_path)
        code, _, err = run_cli(backtest_argv(data, tmp_path / "out", first_origin="2008-01"), capsys)
        assert code == 4

    def test_missing_data_exits_4(self, tmp_path, capsys):
        code, _, err = run_cli(["backtest", "--out", tmp_path / "out"], capsys)
        assert code == 4
        assert "required" in err

    def test_unreadable_data_exits_2(self, tmp_path, capsys):
        code, _, err = run_cli(backtest_argv(tmp_path / "nope.csv", tmp_path / "out"), capsys)
        assert code == 2

    def test_bad_adapter_exits_3(self, tmp_path, capsys):
        data = write_data(tmp_path)
        argv = backtest_argv(data, tmp_path / "out", models="persistence,ext")
        argv += ["--adapter", "ext=/no/such/adapter"]
        code, _, err = run_cli(argv, capsys)
        assert code == 3
        assert "cannot start adapter" in err

    def test_malformed_adapter_flag_exits_4(self, tmp_path, capsys):
        data = write_data(tmp_path)
        argv = backtest_argv(data, tmp_path / "out") + ["--adapter", "no-equals-sign"]
        code, _, err = run_cli(argv, capsys)
        assert code == 4
        assert "NAME=CMD" in err

    def test_subprocess_adapter_model(self, tmp_path, capsys, stub_cmd):
        data = write_data(tmp_path)
        out = tmp_path / "out"
        argv = backtest_argv(data, out, models="persistence,stub")
        argv += ["--adapter", f"stub={stub_cmd}"]
        code, _, _ = run_cli(argv, capsys)
        assert code == 0
        runs = json.loads((out / "runs.json").read_text())
        by_model = {r["model_id"]: r for r in runs["runs"] if r["series_id"] == "gdp"}
        # the stub echoes the last observation, so it matches persistence
        assert [r["forecast"] for r in by_model["stub"]["records"]] == [
            r["forecast"] for r in by_model["persistence"]["records"]
        ]

    def test_replay_adapter(self, tmp_path, capsys, stub_cmd):
        data_path = write_data(tmp_path, sids=("gdp",))
        fixture = tmp_path / "fixture.jsonl"
        series = growthish_series(31, 60, sid="gdp")
        with SubprocessAdapter(stub_cmd) as adapter:
            gw = Gateway(adapter, record_path=str(fixture))
            origin = Period(2008, 1)
            while origin <= Period(2012, 4):
                gw.request_forecast(build_request(series, origin, 1))
                origin = origin + 1
        out = tmp_path / "out"
        argv = backtest_argv(data_path, out, models="persistence,frozen")
        argv += ["--adapter", f"frozen=replay:{fixture}"]
        code, _, _ = run_cli(argv, capsys)
        assert code == 0
        runs = json.loads((out / "runs.json").read_text())
        frozen = next(r for r in runs["runs"] if r["model_id"] == "frozen")
        assert all(r["status"] == "ok" for r in frozen["records"])

    def test_corrupt_replay_fixture_exits_3(self, tmp_path, capsys):
        data = write_data(tmp_path)
        fixture = tmp_path / "fixture.jsonl"
        fixture.write_text("not json\n")
        argv = backtest_argv(data, tmp_path / "out", models="frozen")
        argv += ["--adapter", f"frozen=replay:{fixture}"]
        code, _, err = run_cli(argv, capsys)
        assert code == 3

    def test_failure_budget_exits_1(self, tmp_path, capsys):
        data = write_data(tmp_path, sids=("gdp",))
        out = tmp_path / "out"
        code, _, err = run_cli(backtest_argv(data, out, models="persistence,factor"), capsys)
        assert code == 1
        assert "failure budget" in err
        # artifacts are still written for diagnosis
        runs = json.loads((out / "runs.json").read_text())
        factor = next(r for r in runs["runs"] if r["model_id"] == "factor")
        assert all(r["status"] == "failed" for r in factor["records"])

    def test_cache_dir_reused_across_runs(self, tmp_path, capsys, stub_cmd):
        data = write_data(tmp_path, sids=("gdp",))
        cache = tmp_path / "cache"
        argv1 = backtest_argv(data, tmp_path / "a", models="stub") + [
            "--adapter", f"stub={stub_cmd}", "--cache-dir", cache,
        ]
        assert run_cli(argv1, capsys)[0] == 0
        n_entries = len(list(cache.glob("*.json")))
        assert n_entries == 20  # one per origin
        argv2 = backtest_argv(data, tmp_path / "b", models="stub") + [
            "--adapter", f"stub={stub_cmd}", "--cache-dir", cache,
        ]
        assert run_cli(argv2, capsys)[0] == 0
        assert len(list(cache.glob("*.json"))) == n_entries
        assert (tmp_path / "a" / "runs.json").read_bytes() == (tmp_path / "b" / "runs.json").read_bytes()


class TestDm:
    @pytest.fixture
    def runs_path(self, tmp_path, capsys):
        data = write_data(tmp_path)
        out = tmp_path / "out"
        assert run_cli(backtest_argv(data, out), capsys)[0] == 0
        return out / "runs.json"

    def test_text_table(self, runs_path, capsys):
        code, out, _ = run_cli(["dm", "--runs", runs_path, "--reference", "persistence"], capsys)
        assert code == 0
        assert "reference=persistence loss=squared" in out
        assert "(ref)" in out
        assert "lsboost" in out

    def test_csv_format(self, runs_path, capsys):
        code, out, _ = run_cli(
            ["dm", "--runs", runs_path, "--reference", "persistence", "--format", "csv"], capsys
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "sector,model,rmse,p_value,significant,n,reason"
        assert len(lines) == 3  # lsboost vs persistence on two sectors

    def test_series_filter(self, runs_path, capsys):
        code, out, _ = run_cli(
            ["dm", "--runs", runs_path, "--reference", "persistence", "--series", "gdp", "--format", "csv"],
            capsys,
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("gdp,")

    def test_unknown_reference_exits_4(self, runs_path, capsys):
        code, _, err = run_cli(["dm", "--runs", runs_path, "--reference", "oracle"], capsys)
        assert code == 4
        assert "not among run models" in err

    def test_bad_runs_file_exits_2(self, tmp_path, capsys):
        path = tmp_path / "runs.json"
        path.write_text("{}")
        code, _, err = run_cli(["dm", "--runs", path, "--reference", "persistence"], capsys)
        assert code == 2


class TestSelftest:
    def test_selftest_passes(self, capsys):
        code, out, _ = run_cli(["selftest", "--seed", "0"], capsys)
        assert code == 0
        assert out.count("[PASS]") == 3
        assert "[FAIL]" not in out
        assert out.strip().endswith("selftest: PASS")


class TestEntryPoints:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "macrobench", "ingest", "--data", "/nonexistent.csv"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "cannot read" in proc.stderr

    def test_no_command_prints_help(self, capsys):
        code, out, _ = run_cli([], capsys)
        assert code == 0
        assert "usage: macrobench" in out
