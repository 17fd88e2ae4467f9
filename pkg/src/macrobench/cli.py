"""Command-line entry point: ingest, backtest, dm, selftest.

Exit codes: 0 success, 1 failure budget exceeded or selftest failure,
2 ingestion/validation error, 3 adapter startup error, 4 plan/config
validation error. Settings resolve as config file < command-line flags,
with built-in defaults underneath both.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import baselines, boosting, dm, gateway as gw, reports
from .backtest import (
    DEFAULT_SLICES,
    BacktestPlan,
    MAX_MISSING_SHARE,
    PlanError,
    build_registry,
    evaluate_slices,
    robustness_regression,
    run_backtest,
)
from .metrics import ErrorSample, rmse
from .series import IngestError, Period, SeriesError, TimeSeries, Unit, Window, ingest_csv

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INGEST = 2
EXIT_ADAPTER = 3
EXIT_PLAN = 4

DEFAULTS = {
    "models": ["persistence", "arima"],
    "references": None,  # default: persistence and arima when present
    "horizon": 1,
    "refit_stride": 1,
    "mase_m": 1,
    "dm_loss": "squared",
    "seed": 0,
    "jobs": os.cpu_count() or 1,
    "unit": "yoy_percent",
    "n_windows": 200,
    "min_window": 10,
    "adapters": {},
    "model_options": {},
    "cache_dir": None,
    "first_origin": None,
    "last_origin": None,
    "slices": None,
    "timeout": 60.0,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_OK
    try:
        return args.handler(args)
    except BrokenPipeError:
        return EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="macrobench", description="Quarterly forecast backtesting")
    sub = parser.add_subparsers(dest="command")
    parser.set_defaults(command=None)

    p_ingest = sub.add_parser("ingest", help="validate a CSV data file")
    p_ingest.add_argument("--data", required=True)
    p_ingest.add_argument("--unit", default="yoy_percent", choices=[u.value for u in Unit])
    p_ingest.add_argument("--format", default="text", choices=["text", "json"])
    p_ingest.set_defaults(handler=cmd_ingest)

    p_bt = sub.add_parser("backtest", help="run an expanding-window backtest")
    p_bt.add_argument("--data")
    p_bt.add_argument("--config")
    p_bt.add_argument("--models", help="comma-separated model ids")
    p_bt.add_argument("--horizon", type=int)
    p_bt.add_argument("--first-origin", dest="first_origin")
    p_bt.add_argument("--last-origin", dest="last_origin")
    p_bt.add_argument("--slices", help="semicolon-separated name=START:END windows")
    p_bt.add_argument("--mase-m", dest="mase_m", type=int)
    p_bt.add_argument("--dm-loss", dest="dm_loss", choices=["squared", "absolute"])
    p_bt.add_argument("--adapter", action="append", default=None, metavar="NAME=CMD", help="external adapter command or replay:PATH")
    p_bt.add_argument("--cache-dir", dest="cache_dir")
    p_bt.add_argument("--out", required=True)
    p_bt.add_argument("--seed", type=int)
    p_bt.add_argument("--jobs", type=int)
    p_bt.add_argument("--format", default="text", choices=["text", "json"])
    p_bt.set_defaults(handler=cmd_backtest)

    p_dm = sub.add_parser("dm", help="pairwise DM comparison of recorded runs")
    p_dm.add_argument("--runs", required=True, help="runs.json from a backtest")
    p_dm.add_argument("--reference", required=True)
    p_dm.add_argument("--series", help="restrict to one series id")
    p_dm.add_argument("--dm-loss", dest="dm_loss", default="squared", choices=["squared", "absolute"])
    p_dm.add_argument("--format", default="text", choices=["text", "csv"])
    p_dm.set_defaults(handler=cmd_dm)

    p_st = sub.add_parser("selftest", help="run built-in statistical oracles")
    p_st.add_argument("--seed", type=int, default=0)
    p_st.set_defaults(handler=cmd_selftest)
    return parser


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    try:
        with open(args.data, encoding="utf-8") as fh:
            text = fh.read()
        series = ingest_csv(text, Unit(args.unit))
    except OSError as exc:
        print(f"error: cannot read {args.data}: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    if args.format == "json":
        doc = [
            {"series_id": s.id, "start": str(s.start), "end": str(s.end), "n": len(s), "unit": s.unit.value}
            for s in series
        ]
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        for s in series:
            print(f"{s.id}: {s.start}..{s.end} ({len(s)} observations), contiguous, unit={s.unit.value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# backtest


def load_config_file(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".json"):
        return json.loads(raw.decode("utf-8"))
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(raw.decode("utf-8"))


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        file_cfg = load_config_file(args.config)
        for key, value in file_cfg.items():
            if key not in DEFAULTS and key not in ("data", "unit"):
                raise PlanError(f"unknown config key {key!r}")
            cfg[key] = value
    for key in ("data", "models", "horizon", "first_origin", "last_origin", "slices",
                "mase_m", "dm_loss", "cache_dir", "seed", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if isinstance(cfg.get("models"), str):
        cfg["models"] = [m.strip() for m in cfg["models"].split(",") if m.strip()]
    if args.adapter:
        adapters = dict(cfg.get("adapters") or {})
        for item in args.adapter:
            name, sep, cmd = item.partition("=")
            if not sep or not name or not cmd:
                raise PlanError(f"--adapter expects NAME=CMD, got {item!r}")
            adapters[name] = cmd
        cfg["adapters"] = adapters
    return cfg


def parse_slices(value) -> tuple[tuple[str, Window], ...]:
    if value is None:
        return DEFAULT_SLICES
    out = []
    if isinstance(value, str):
        for chunk in value.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            name, sep, span = chunk.rpartition("=")
            lo, _, hi = span.partition(":")
            window = Window(Period.parse(lo), Period.parse(hi))
            out.append((name if sep else f"{lo}-{hi}", window))
    else:
        for entry in value:
            window = Window(Period.parse(entry["start"]), Period.parse(entry["end"]))
            out.append((entry.get("name", f"{entry['start']}-{entry['end']}"), window))
    if not out:
        raise PlanError("no usable slice definitions")
    return tuple(out)


def cmd_backtest(args) -> int:
    try:
        cfg = resolve_config(args)
    except (PlanError, SeriesError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLAN

    if not cfg.get("data"):
        print("error: --data (or a config data entry) is required", file=sys.stderr)
        return EXIT_PLAN
    try:
        with open(cfg["data"], encoding="utf-8") as fh:
            series_list = ingest_csv(fh.read(), Unit(cfg.get("unit", "yoy_percent")))
    except OSError as exc:
        print(f"error: cannot read {cfg['data']}: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    data = {s.id: s for s in series_list}

    adapters = {}
    gateways = {}
    try:
        try:
            for name, command in (cfg.get("adapters") or {}).items():
                if command.startswith("replay:"):
                    adapter = gw.replay_fixture(command[len("replay:") :])
                else:
                    adapter = gw.SubprocessAdapter(command, timeout=cfg["timeout"], name=name)
                adapters[name] = adapter
                cache = gw.ForecastCache(cfg["cache_dir"]) if cfg.get("cache_dir") else None
                gateways[name] = gw.Gateway(adapter, cache=cache, timeout=cfg["timeout"])
        except (gw.AdapterStartupError, gw.FixtureCorrupt) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ADAPTER

        try:
            plan, registry = build_plan(cfg, data, gateways)
        except (PlanError, SeriesError, boosting.BoostError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PLAN

        runs = run_backtest(plan, data, registry, jobs=int(cfg["jobs"]))
    finally:
        for adapter in adapters.values():
            adapter.close()

    report = evaluate_slices(runs, data, plan.slices, m=int(cfg["mase_m"]))
    references = cfg.get("references")
    if references is None:
        references = [m for m in ("persistence", "arima") if m in plan.model_ids]
    dm_rows = dm.dm_grid(runs, references, loss=cfg["dm_loss"], slices=list(plan.slices), horizon=plan.horizon)

    robustness_doc: dict[str, dict[str, dict]] = {}
    points_by_model: dict[str, dict[str, list]] = {}
    for run in runs:
        ok_count = sum(1 for r in run.records if r.status == "ok")
        if ok_count == 0:
            continue
        try:
            points, slope, intercept = robustness_regression(
                run, data[run.series_id], n_windows=int(cfg["n_windows"]), min_len=int(cfg["min_window"]), seed=int(cfg["seed"])
            )
        except Exception as exc:  # noqa: BLE001 - robustness is best-effort per run
            robustness_doc.setdefault(run.model_id, {})[run.series_id] = {"error": str(exc)}
            continue
        robustness_doc.setdefault(run.model_id, {})[run.series_id] = {
            "slope": slope,
            "intercept": intercept,
            "n_points": len(points),
        }
        points_by_model.setdefault(run.model_id, {})[run.series_id] = points

    failures = {}
    budget_exceeded = False
    for run in runs:
        failures.setdefault(run.model_id, {})[run.series_id] = run.n_failed
        if run.records and run.n_failed / len(run.records) > MAX_MISSING_SHARE:
            budget_exceeded = True

    resolved = {k: v for k, v in sorted(cfg.items()) if k != "timeout"}
    resolved["slices"] = [
        {"name": name, "start": str(w.start), "end": str(w.end)} for name, w in plan.slices
    ]
    resolved["models"] = list(plan.model_ids)
    resolved["first_origin"] = str(plan.first_origin)
    resolved["last_origin"] = str(plan.last_origin)
    slices_resolved = resolved["slices"]

    os.makedirs(args.out, exist_ok=True)
    artifacts = {
        "runs.json": reports.runs_to_json(runs),
        "report.json": reports.report_to_json(report, dm_rows, robustness_doc, resolved, failures, slices_resolved),
        "report.md": reports.report_to_markdown(report, dm_rows, resolved),
        "dm_grid.csv": reports.dm_grid_to_csv(dm_rows),
        "robustness.csv": reports.robustness_to_csv(points_by_model),
    }
    for name, text in artifacts.items():
        with open(os.path.join(args.out, name), "w", encoding="utf-8") as fh:
            fh.write(text)

    total_failed = sum(run.n_failed for run in runs)
    print(f"wrote {len(artifacts)} artifacts to {args.out}")
    print(f"runs: {len(runs)}; records: {sum(len(r.records) for r in runs)}; failed: {total_failed}")
    if budget_exceeded:
        print("failure budget exceeded (a model lost more than 10% of its records)", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def build_plan(cfg: dict, data: dict[str, TimeSeries], gateways: dict) -> tuple[BacktestPlan, dict]:
    models = list(cfg["models"])
    horizon = int(cfg["horizon"])
    series_ids = tuple(data)
    if not series_ids:
        raise PlanError("no series in the data")
    if cfg.get("first_origin"):
        first_origin = Period.parse(str(cfg["first_origin"]))
    else:
        first_origin = max(s.start + 15 for s in data.values())
    if cfg.get("last_origin"):
        last_origin = Period.parse(str(cfg["last_origin"]))
    else:
        last_origin = min(s.end - horizon for s in data.values())
    slices = parse_slices(cfg.get("slices"))
    plan = BacktestPlan(
        series_ids=series_ids,
        model_ids=tuple(models),
        first_origin=first_origin,
        last_origin=last_origin,
        horizon=horizon,
        refit_stride=int(cfg["refit_stride"]),
        slices=slices,
    )
    registry = build_registry(models, data, gateways, cfg.get("model_options") or {})
    return plan, registry


# ---------------------------------------------------------------------------
# dm


def cmd_dm(args) -> int:
    try:
        with open(args.runs, encoding="utf-8") as fh:
            runs = reports.runs_from_json(fh.read())
    except (OSError, ValueError) as exc:
        print(f"error: cannot load runs: {exc}", file=sys.stderr)
        return EXIT_INGEST
    if args.series:
        runs = [r for r in runs if r.series_id == args.series]
    models = []
    for run in runs:
        if run.model_id not in models:
            models.append(run.model_id)
    if args.reference not in models:
        print(f"error: reference {args.reference!r} not among run models {models}", file=sys.stderr)
        return EXIT_PLAN

    rows = dm.dm_grid(runs, [args.reference], loss=args.dm_loss)
    rmse_by: dict[tuple[str, str], float] = {}
    from .backtest import error_sample_from_records

    for run in runs:
        try:
            rmse_by[(run.model_id, run.series_id)] = rmse(error_sample_from_records(run.records))
        except ValueError:
            pass

    header = f"reference={args.reference} loss={args.dm_loss}"
    if args.format == "csv":
        print("sector,model,rmse,p_value,significant,n,reason")
        for row in rows:
            key = (row["model"], row["sector"])
            rmse_text = repr(rmse_by[key]) if key in rmse_by else ""
            p = "" if row["p_value"] is None else repr(row["p_value"])
            sig = "" if row["significant"] is None else str(row["significant"]).lower()
            print(f"{row['sector']},{row['model']},{rmse_text},{p},{sig},{row['n']},{row['reason'] or ''}")
        return EXIT_OK
    print(header)
    sectors = sorted({row["sector"] for row in rows})
    for sector in sectors:
        print(f"\n{sector}")
        print(f"  {'model':<24} {'RMSE':>10} {'p-value':>10}")
        ref_key = (args.reference, sector)
        if ref_key in rmse_by:
            print(f"  {args.reference:<24} {rmse_by[ref_key]:>10.4f} {'(ref)':>10}")
        for row in rows:
            if row["sector"] != sector:
                continue
            key = (row["model"], sector)
            rmse_text = f"{rmse_by[key]:.4f}" if key in rmse_by else "n/a"
            if row["p_value"] is None:
                p_text = f"n/a ({row['reason']})"
            else:
                p_text = f"{row['p_value']:.4f}" + ("**" if row["significant"] else "")
            print(f"  {row['model']:<24} {rmse_text:>10} {p_text:>10}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def cmd_selftest(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True
    ok &= _selftest_dm(rng)
    ok &= _selftest_boost(rng)
    ok &= _selftest_arima(rng)
    print("selftest:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAILURE


def _report(name: str, passed: bool) -> bool:
    print(f"  [{'PASS' if passed else 'FAIL'}] {name}")
    return passed


def _selftest_dm(rng) -> bool:
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(16, 120))
        h = int(rng.choice([1, 2, 4]))
        d = rng.normal(size=n)
        ld = dm.LossDifferential(d, "squared", h)
        result = dm.dm_statistic(ld)
        dbar = d.mean()
        gammas = [float(np.sum((d[k:] - dbar) * (d[: n - k] - dbar)) / n) for k in range(h)]
        var = gammas[0] + 2.0 * sum((1 - k / h) * gammas[k] for k in range(1, h))
        if var <= 0:
            var = gammas[0]
        brute = dbar / np.sqrt(var / n)
        worst = max(worst, abs(result.statistic - brute))
    return _report(f"dm statistic matches brute force (max diff {worst:.2e})", worst < 1e-10)


def _selftest_boost(rng) -> bool:
    good = True
    for _ in range(20):
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        model = boosting.fit_lsboost(X, y, n_stages=60, shrinkage=0.1)
        mses = np.array(model.train_mse)
        good &= bool(np.all(np.diff(mses) <= 1e-12))
        good &= abs(model.f0 - y.mean()) < 1e-12
    return _report("lsboost training error non-increasing, f0 = mean", good)


def _selftest_arima(rng) -> bool:
    hits = 0
    trials = 3
    for _ in range(trials):
        n = 400
        e = rng.normal(size=n)
        y = np.empty(n)
        y[0] = e[0]
        for t in range(1, n):
            y[t] = 0.8 * y[t - 1] + e[t]
        series = TimeSeries("selftest", Unit.YOY_PERCENT, Period(1990, 1), y)
        fit = baselines.auto_arima(series)
        resid = baselines.arima_residuals(fit, series)
        model_mse = float(np.mean(resid**2))
        true_mse = float(np.mean((y[1:] - 0.8 * y[:-1]) ** 2))
        if abs(model_mse - true_mse) / true_mse < 0.05:
            hits += 1
    return _report(f"auto ARIMA recovers an AR(1) ({hits}/{trials} within 5%)", hits >= trials - 1)
