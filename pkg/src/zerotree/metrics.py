"""Macro F1, balanced accuracy, repeat aggregation, and table emission.

Conventions, since different libraries disagree at the edges: a class
whose precision + recall is zero contributes an F1 of 0, and classes
absent from both truth and predictions still count toward the macro F1
mean over the full label alphabet. Balanced accuracy is the mean recall
over classes that actually occur in the truth.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple
    counts: np.ndarray  # counts[true][pred]

    @classmethod
    def from_labels(cls, y_true, y_pred, labels: Optional[Sequence] = None) -> "ConfusionMatrix":
        if len(y_true) != len(y_pred):
            raise ValueError(f"{len(y_true)} truths but {len(y_pred)} predictions")
        if labels is None:
            labels = sorted(set(y_true) | set(y_pred))
        labels = tuple(labels)
        index = {label: i for i, label in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=int)
        for truth, guess in zip(y_true, y_pred):
            counts[index[truth], index[guess]] += 1
        return cls(labels=labels, counts=counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self, i: int) -> int:
        return int(self.counts[i].sum())

    def recall(self, i: int) -> float:
        row = self.counts[i].sum()
        return float(self.counts[i, i] / row) if row else 0.0

    def precision(self, i: int) -> float:
        col = self.counts[:, i].sum()
        return float(self.counts[i, i] / col) if col else 0.0


def macro_f1(cm: ConfusionMatrix) -> float:
    """Mean per-class F1 over the full label alphabet; undefined F1 counts as 0."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    scores = []
    for i in range(len(cm.labels)):
        p, r = cm.precision(i), cm.recall(i)
        scores.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return float(np.mean(scores))


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean recall over classes present in the truth; binary: (sens + spec) / 2."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    recalls = [cm.recall(i) for i in range(len(cm.labels)) if cm.support(i) > 0]
    return float(np.mean(recalls))


def macro_f1_score(y_true, y_pred, labels: Optional[Sequence] = None) -> float:
    return macro_f1(ConfusionMatrix.from_labels(y_true, y_pred, labels))


def balanced_accuracy_score(y_true, y_pred, labels: Optional[Sequence] = None) -> float:
    return balanced_accuracy(ConfusionMatrix.from_labels(y_true, y_pred, labels))


@dataclass(frozen=True)
class CellScore:
    """One repeat of one (dataset, method, split fraction) cell."""

    dataset: str
    method: str
    split_fraction: float
    repeat: int
    macro_f1: float
    balanced_accuracy: float


CSV_HEADER = ["dataset", "method", "split_fraction", "repeat", "macro_f1", "balanced_accuracy"]
AGG_HEADER = ["dataset", "method", "split_fraction", "statistic", "macro_f1", "balanced_accuracy"]


@dataclass
class MetricsReport:
    scores: list

    def cells(self) -> dict:
        """Scores grouped by (dataset, method, split_fraction), insertion-ordered."""
        grouped: dict = {}
        for score in self.scores:
            key = (score.dataset, score.method, score.split_fraction)
            grouped.setdefault(key, []).append(score)
        return grouped

    def aggregate(self) -> list:
        """Median per cell; per-repeat values stay available in ``scores``."""
        rows = []
        for (dataset, method, fraction), cell in self.cells().items():
            rows.append(
                {
                    "dataset": dataset,
                    "method": method,
                    "split_fraction": fraction,
                    "statistic": "median",
                    "macro_f1": float(np.median([s.macro_f1 for s in cell])),
                    "balanced_accuracy": float(np.median([s.balanced_accuracy for s in cell])),
                }
            )
        return rows

    def to_csv(self, aggregated: bool = False) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        if aggregated:
            writer.writerow(AGG_HEADER)
            for row in self.aggregate():
                writer.writerow(
                    [
                        row["dataset"],
                        row["method"],
                        repr(row["split_fraction"]),
                        row["statistic"],
                        repr(row["macro_f1"]),
                        repr(row["balanced_accuracy"]),
                    ]
                )
        else:
            writer.writerow(CSV_HEADER)
            for score in self.scores:
                writer.writerow(
                    [
                        score.dataset,
                        score.method,
                        repr(score.split_fraction),
                        score.repeat,
                        repr(score.macro_f1),
                        repr(score.balanced_accuracy),
                    ]
                )
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected report header: {header}")
        scores = []
        for record in reader:
            dataset, method, fraction, repeat, f1, bacc = record
            scores.append(
                CellScore(
                    dataset=dataset,
                    method=method,
                    split_fraction=float(fraction),
                    repeat=int(repeat),
                    macro_f1=float(f1),
                    balanced_accuracy=float(bacc),
                )
            )
        return cls(scores=scores)


def aggregate(scores: Sequence[CellScore]) -> MetricsReport:
    return MetricsReport(scores=list(scores))


def emit_table(
    report: MetricsReport,
    format: str = "markdown",
    metric: str = "macro_f1",
    diff_baseline: Optional[str] = None,
) -> str:
    """Render cell medians: rows are datasets, columns are methods.

    With ``diff_baseline`` set, that method's column shows its median and
    every other column shows a signed difference against it. A split column
    appears only when the report spans several fractions.
    """
    if format not in ("markdown", "csv"):
        raise ValueError(f"format must be 'markdown' or 'csv', got {format!r}")
    rows = report.aggregate()
    fractions = sorted({row["split_fraction"] for row in rows})
    methods: list = []
    for row in rows:
        if row["method"] not in methods:
            methods.append(row["method"])
    if diff_baseline is not None:
        if diff_baseline not in methods:
            raise ValueError(f"baseline method {diff_baseline!r} not in report")
        methods = [diff_baseline] + [m for m in methods if m != diff_baseline]
    values = {
        (row["dataset"], row["method"], row["split_fraction"]): row[metric] for row in rows
    }
    datasets: list = []
    for row in rows:
        if row["dataset"] not in datasets:
            datasets.append(row["dataset"])

    many = len(fractions) > 1
    header = ["dataset"] + (["split"] if many else []) + list(methods)
    body = []
    for dataset in datasets:
        for fraction in fractions:
            cells = [dataset] + ([f"{fraction:g}"] if many else [])
            base = values.get((dataset, diff_baseline, fraction)) if diff_baseline else None
            for method in methods:
                value = values.get((dataset, method, fraction))
                if value is None:
                    cells.append("")
                elif diff_baseline is None or method == diff_baseline:
                    cells.append(f"{value:.2f}")
                else:
                    cells.append(f"{value - base:+.2f}")
            body.append(cells)

    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return out.getvalue()
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    lines = [
        "| " + " | ".join(str(cell).ljust(w) for cell, w in zip(header, widths)) + " |",
        "|" + "|".join("-" * (w + 2) for w in widths) + "|",
    ]
    for cells in body:
        lines.append("| " + " | ".join(str(cell).ljust(w) for cell, w in zip(cells, widths)) + " |")
    return "\n".join(lines)
