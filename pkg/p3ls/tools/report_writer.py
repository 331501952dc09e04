"""Experiment report IO: report.json, summary.csv and a console table."""

import logging
from pathlib import Path
from typing import Dict, Union

import pandas as pd
from tabulate import tabulate

from ..harness import ExperimentReport

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "dataset",
    "model",
    "mean_r2",
    "std_r2",
    "mean_fit_time",
    "mean_inference_time",
    "mean_k",
]


def summary_frame(report: ExperimentReport) -> pd.DataFrame:
    """One row per model per dataset."""
    rows = [
        {"dataset": section.name, **summary.model_dump()}
        for section in report.datasets
        for summary in section.summary
    ]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def emit_report(report: ExperimentReport, directory: Union[str, Path]) -> Dict[str, Path]:
    """
    Write ``report.json`` (every record) and ``summary.csv``.

    Returns:
        The written paths keyed by file kind.

    Raises:
        OSError: If a file cannot be written; the message names the path.
    """
    directory = Path(directory)
    paths = {"report": directory / "report.json", "summary": directory / "summary.csv"}
    try:
        directory.mkdir(parents=True, exist_ok=True)
        paths["report"].write_text(report.model_dump_json(indent=2), encoding="utf-8")
        summary_frame(report).to_csv(paths["summary"], index=False)
    except OSError as exc:
        raise OSError(f"could not write report to {directory}: {exc}") from exc
    logger.info("Report written to %s", directory)
    return paths


def load_report(path: Union[str, Path]) -> ExperimentReport:
    """Read a ``report.json`` back into an ExperimentReport."""
    return ExperimentReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def format_summary(report: ExperimentReport) -> str:
    """Console table of the summary rows."""
    frame = summary_frame(report)
    if frame.empty:
        return "(no model results)"
    return tabulate(frame, headers="keys", tablefmt="github", showindex=False, floatfmt=".6g")
