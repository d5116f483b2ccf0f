"""Masked IoU evaluation."""

from .miou import (
    IoUAccumulator,
    confusion_histogram,
    evaluate,
    evaluate_prob,
    format_report,
    report_from_histogram,
)

__all__ = [
    "IoUAccumulator",
    "confusion_histogram",
    "evaluate",
    "evaluate_prob",
    "format_report",
    "report_from_histogram",
]
