"""Deterministic report emission: JSON, Markdown and CSV artifacts.

Artifacts carry no timestamps and embed the resolved configuration, so
identical inputs produce byte-identical outputs. JSON keeps full float
precision; the Markdown grid rounds to 2 decimals and annotates each
value with its tier label.
"""

from __future__ import annotations

import csv
import io
import json

from .backtest import BacktestRun, ForecastRecord, MetricReport, RobustnessPoint
from .series import Period

RUNS_FORMAT = "backtest-runs/1"
REPORT_FORMAT = "evaluation-report/1"


def runs_to_json(runs: list[BacktestRun]) -> str:
    doc = {
        "format": RUNS_FORMAT,
        "runs": [
            {
                "model_id": run.model_id,
                "series_id": run.series_id,
                "records": [
                    {
                        "origin": str(r.origin),
                        "target": str(r.target),
                        "forecast": r.forecast,
                        "actual": r.actual,
                        "status": r.status,
                        "reason": r.reason,
                    }
                    for r in run.records
                ],
            }
            for run in runs
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def runs_from_json(text: str) -> list[BacktestRun]:
    doc = json.loads(text)
    if doc.get("format") != RUNS_FORMAT:
        raise ValueError(f"unsupported runs format {doc.get('format')!r}")
    runs = []
    for entry in doc["runs"]:
        run = BacktestRun(model_id=entry["model_id"], series_id=entry["series_id"])
        for r in entry["records"]:
            run.records.append(
                ForecastRecord(
                    origin=Period.parse(r["origin"]),
                    target=Period.parse(r["target"]),
                    forecast=r["forecast"],
                    actual=r["actual"],
                    status=r["status"],
                    reason=r.get("reason"),
                )
            )
        runs.append(run)
    return runs


def report_to_json(
    report: MetricReport,
    dm_rows: list[dict],
    robustness: dict[str, dict[str, dict]],
    config: dict,
    failures: dict[str, dict[str, int]],
    slices_resolved: list[dict],
) -> str:
    metrics_doc: dict = {}
    for slice_name in report.slice_names:
        metrics_doc[slice_name] = {}
        for sector in report.sectors:
            sector_doc = {}
            for model in report.models:
                cell = dict(report.cells[(slice_name, sector, model)])
                cell["rank"] = {
                    metric: report.ranks.get((slice_name, sector, metric), {}).get(model)
                    for metric in MetricReport.METRICS
                }
                cell["tier"] = {
                    metric: report.tiers.get((slice_name, sector, metric), {}).get(model)
                    for metric in MetricReport.METRICS
                }
                cov = report.coverage.get((slice_name, sector, model))
                cell["coverage"] = cov
                sector_doc[model] = cell
            metrics_doc[slice_name][sector] = sector_doc
    doc = {
        "format": REPORT_FORMAT,
        "config": config,
        "slices": slices_resolved,
        "sectors": report.sectors,
        "models": report.models,
        "mase_m": report.mase_m,
        "metrics": metrics_doc,
        "mean_rank": report.mean_rank,
        "dm": dm_rows,
        "robustness": robustness,
        "failures": failures,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _fmt(value: float | None, tier: str | None = None) -> str:
    if value is None:
        return "n/a"
    text = f"{value:.2f}"
    return f"{text} ({tier})" if tier else text


def report_to_markdown(report: MetricReport, dm_rows: list[dict], config: dict) -> str:
    lines = ["# Forecast evaluation", ""]
    lines.append(f"MASE m = {report.mase_m}; DM loss = {config.get('dm_loss', 'squared')}; seed = {config.get('seed')}")
    lines.append("")
    for slice_name in report.slice_names:
        lines.append(f"## {slice_name}")
        lines.append("")
        for sector in report.sectors:
            lines.append(f"### {sector}")
            lines.append("")
            lines.append("| Model | MAE | RMSE | SMAPE | MASE | RMSE rank |")
            lines.append("|---|---|---|---|---|---|")
            for model in report.models:
                cell = report.cells[(slice_name, sector, model)]
                cols = [
                    _fmt(cell.get(metric), report.tiers.get((slice_name, sector, metric), {}).get(model))
                    for metric in MetricReport.METRICS
                ]
                rank = report.ranks.get((slice_name, sector, "rmse"), {}).get(model)
                cols.append("n/a" if rank is None else f"{rank:g}")
                lines.append(f"| {model} | " + " | ".join(cols) + " |")
            lines.append("")
        lines.append("Mean RMSE rank across sectors:")
        lines.append("")
        lines.append("| Model | Mean rank |")
        lines.append("|---|---|")
        for model in report.models:
            value = report.mean_rank.get(slice_name, {}).get(model)
            lines.append(f"| {model} | " + ("n/a" if value is None else f"{value:.2f}") + " |")
        lines.append("")
    if dm_rows:
        lines.append("## Pairwise significance (DM two-sided p-values; ** marks p < 0.05)")
        lines.append("")
        lines.append("| Slice | Sector | Model | Reference | p-value | n |")
        lines.append("|---|---|---|---|---|---|")
        for row in dm_rows:
            if row["p_value"] is None:
                p_text = f"n/a ({row['reason']})"
            else:
                p_text = f"{row['p_value']:.4f}" + ("**" if row["significant"] else "")
            lines.append(
                f"| {row['slice']} | {row['sector']} | {row['model']} | {row['reference']} | {p_text} | {row['n']} |"
            )
        lines.append("")
    return "\n".join(lines)


def dm_grid_to_csv(dm_rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["slice", "sector", "model", "reference", "p_value", "statistic", "significant", "n", "reason"])
    for row in dm_rows:
        writer.writerow(
            [
                row["slice"],
                row["sector"],
                row["model"],
                row["reference"],
                "" if row["p_value"] is None else repr(row["p_value"]),
                "" if row["statistic"] is None else repr(row["statistic"]),
                "" if row["significant"] is None else str(row["significant"]).lower(),
                row["n"],
                row["reason"] or "",
            ]
        )
    return buf.getvalue()


def robustness_to_csv(points_by_model: dict[str, dict[str, list[RobustnessPoint]]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "series", "window_start", "window_end", "actual_variance", "model_rmse"])
    for model in sorted(points_by_model):
        for series in sorted(points_by_model[model]):
            for p in points_by_model[model][series]:
                writer.writerow(
                    [
                        model,
                        series,
                        str(p.window.start),
                        str(p.window.end),
                        repr(p.actual_variance),
                        repr(p.model_rmse),
                    ]
                )
    return buf.getvalue()
