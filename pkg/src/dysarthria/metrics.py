"""Confusion matrices and the challenge metrics (accuracy, macro/weighted F1).

Zero-denominator convention throughout: precision, recall, and F1 are 0
whenever their denominators vanish, so degenerate predictors are scorable
without exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_CLASSES = 5


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[t][p]: speakers of true class t+1 predicted as class p+1."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", c)
        if c.shape != (N_CLASSES, N_CLASSES) or np.any(c < 0):
            raise ValueError("counts must be a non-negative 5x5 matrix")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray


def confusion_matrix(pairs) -> ConfusionMatrix:
    """Tally (true, predicted) label pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no prediction pairs")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for true, pred in pairs:
        if not (1 <= true <= N_CLASSES and 1 <= pred <= N_CLASSES):
            raise ValueError(f"label pair ({true}, {pred}) outside 1..{N_CLASSES}")
        counts[true - 1, pred - 1] += 1
    return ConfusionMatrix(counts)


def metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """Per-class precision/recall/F1 and the three summary scores."""
    counts = matrix.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty confusion matrix")

    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    support = counts.sum(axis=1)

    precision = np.divide(tp, predicted, out=np.zeros(N_CLASSES), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros(N_CLASSES), where=support > 0)
    pr_sum = precision + recall
    f1 = np.divide(2 * precision * recall, pr_sum, out=np.zeros(N_CLASSES), where=pr_sum > 0)

    accuracy = float(tp.sum() / total)
    macro_f1 = float(f1.mean())
    weighted_f1 = float(np.dot(f1, support) / support.sum())
    return MetricsReport(accuracy, macro_f1, weighted_f1, precision, recall, f1)


def format_report(matrix: ConfusionMatrix, report: MetricsReport) -> str:
    """Human-readable confusion matrix plus metric table."""
    lines = ["confusion matrix (rows = true, cols = predicted):"]
    header = "      " + "".join(f"{p + 1:>6d}" for p in range(N_CLASSES))
    lines.append(header)
    for t in range(N_CLASSES):
        row = "".join(f"{int(matrix.counts[t, p]):>6d}" for p in range(N_CLASSES))
        lines.append(f"  L={t + 1}{row}")
    lines.append("")
    lines.append(f"accuracy     {report.accuracy:.4f}")
    lines.append(f"macro F1     {report.macro_f1:.4f}")
    lines.append(f"weighted F1  {report.weighted_f1:.4f}")
    lines.append("")
    lines.append("class  precision  recall      f1")
    for c in range(N_CLASSES):
        lines.append(
            f"    {c + 1}     {report.precision[c]:.4f}  {report.recall[c]:.4f}  {report.f1[c]:.4f}"
        )
    return "\n".join(lines) + "\n"


def report_to_kv(matrix: ConfusionMatrix, report: MetricsReport) -> str:
    """Flat ``key=value`` lines for machine consumption."""
    lines = [
        f"accuracy={report.accuracy:.10g}",
        f"macro_f1={report.macro_f1:.10g}",
        f"weighted_f1={report.weighted_f1:.10g}",
        f"total={matrix.total}",
    ]
    for c in range(N_CLASSES):
        lines.append(f"precision_{c + 1}={report.precision[c]:.10g}")
        lines.append(f"recall_{c + 1}={report.recall[c]:.10g}")
        lines.append(f"f1_{c + 1}={report.f1[c]:.10g}")
    for t in range(N_CLASSES):
        for p in range(N_CLASSES):
            lines.append(f"cm_{t + 1}_{p + 1}={int(matrix.counts[t, p])}")
    return "\n".join(lines) + "\n"
