import logging
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd

from src.schemas.evaluation.models import ConditionSummary, EvalReport, MetricSummary, RunResult
from src.services.storage import atomic_write

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
SUMMARY_NAME = "summary.txt"


def run_metrics(run: RunResult) -> dict[str, float]:
    """Flat metric name -> value map of one successful run."""
    values = {name: getattr(run, name) for name in ("accuracy", "macro_f1", "auroc", "tpr_at_fpr") if getattr(run, name) is not None}
    for class_name, metrics in run.per_class.items():
        values[f"{class_name}/accuracy"] = metrics.accuracy
        values[f"{class_name}/f1"] = metrics.f1
    return values


def mean_std(values: list[float]) -> MetricSummary:
    """Mean and sample standard deviation; a single value has std 0."""
    array = np.asarray(values, dtype=np.float64)
    std = float(array.std(ddof=1)) if len(array) > 1 else 0.0
    return MetricSummary(mean=float(array.mean()), std=std)


def summarize(runs: list[RunResult]) -> list[ConditionSummary]:
    """Aggregate successful runs per (kind, condition), in sorted order."""
    grouped: dict[tuple, list[RunResult]] = defaultdict(list)
    for run in runs:
        grouped[(run.kind, run.condition)].append(run)

    summaries = []
    for (kind, condition), group in sorted(grouped.items(), key=lambda item: (item[0][0].value, item[0][1])):
        ok = [run for run in group if run.status == "ok"]
        collected: dict[str, list[float]] = defaultdict(list)
        for run in ok:
            for name, value in run_metrics(run).items():
                collected[name].append(value)
        summaries.append(
            ConditionSummary(
                kind=kind,
                condition=condition,
                n_runs=len(ok),
                failed_runs=len(group) - len(ok),
                single_run=len(ok) == 1,
                metrics={name: mean_std(values) for name, values in sorted(collected.items())},
            )
        )
        if len(ok) < len(group):
            logger.warning(f"{kind.value}/{condition}: {len(group) - len(ok)} of {len(group)} runs failed and are excluded")
    return summaries


def _cell(summary: ConditionSummary, name: str) -> str:
    metric = summary.metrics.get(name)
    if metric is None:
        return "-"
    return f"{100 * metric.mean:.1f}±{100 * metric.std:.1f}"


def summary_table(report: EvalReport) -> pd.DataFrame:
    """One row per (kind, condition) with mean±std in percent.

    Classification reports carry overall Acc./F1 then per-class Acc./F1; LOAO reports carry AUROC and TPR.
    """
    if report.experiment == "loao":
        columns = {"AUROC": "auroc", f"TPR@{100 * report.target_fpr:g}%FPR": "tpr_at_fpr"}
    else:
        columns = {"Acc.": "accuracy", "F1": "macro_f1"}
        for class_name in report.class_names:
            columns[f"{class_name} Acc."] = f"{class_name}/accuracy"
            columns[f"{class_name} F1"] = f"{class_name}/f1"
    rows = []
    for summary in report.summaries:
        row = {"Model": summary.kind.value, "Condition": summary.condition, "Runs": summary.n_runs}
        row.update({label: _cell(summary, name) for label, name in columns.items()})
        rows.append(row)
    return pd.DataFrame(rows)


def render_summary(report: EvalReport) -> str:
    title = f"{report.dataset} {report.experiment}"
    if report.unknown_class:
        title += f" (unknown: {report.unknown_class})"
    lines = [title, ""]
    table = summary_table(report)
    lines.append(table.to_string(index=False) if len(table) else "(no runs)")
    if report.failed_runs:
        lines.append(f"\n{report.failed_runs} failed run(s) excluded from the aggregates")
    if any(s.single_run for s in report.summaries):
        lines.append("\nsingle-run rows report std 0")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, out_dir: Path) -> list[Path]:
    """Write the machine-readable report and the human summary table; returns the written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path, summary_path = out_dir / REPORT_NAME, out_dir / SUMMARY_NAME
    atomic_write(report_path, report.model_dump_json(indent=2).encode("utf-8"))
    atomic_write(summary_path, render_summary(report).encode("utf-8"))
    logger.info(f"Wrote {report.experiment} report with {len(report.runs)} runs to {out_dir}")
    return [report_path, summary_path]
