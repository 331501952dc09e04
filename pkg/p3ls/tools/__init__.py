"""Report helpers for the experiment harness."""

from .report_writer import emit_report, format_summary, load_report, summary_frame

__all__ = ["emit_report", "format_summary", "load_report", "summary_frame"]
