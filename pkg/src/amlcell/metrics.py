"""Confusion matrices and the five classification metrics.

Accuracy, sensitivity (recall), specificity, precision and F1 are computed
from one-vs-rest counts. A metric whose denominator is zero is ``None``
("undefined"), never 0 or 1, and is left out of macro averages.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "precision", "f1")
PER_CLASS_NAMES = ("sensitivity", "specificity", "precision", "f1")


@dataclass
class ConfusionMatrix:
    """Rows are actual classes, columns predicted classes."""

    k: int
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"class count must be positive, got {self.k}")
        if self.counts is None:
            self.counts = np.zeros((self.k, self.k), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (self.k, self.k):
                raise ValueError(f"counts shape {self.counts.shape} != ({self.k}, {self.k})")
            if (self.counts < 0).any():
                raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, k: int, actual: Sequence[int], predicted: Sequence[int]) -> "ConfusionMatrix":
        cm = cls(k)
        for a, p in zip(actual, predicted, strict=True):
            cm.accumulate(a, p)
        return cm

    def _check(self, label: int) -> int:
        label = int(label)
        if not 0 <= label < self.k:
            raise ValueError(f"label {label} out of range [0, {self.k})")
        return label

    def accumulate(self, actual: int, predicted: int) -> "ConfusionMatrix":
        self.counts[self._check(actual), self._check(predicted)] += 1
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.k != self.k:
            raise ValueError(f"cannot merge {self.k}-class and {other.k}-class matrices")
        return ConfusionMatrix(self.k, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, labels: Sequence[str] | None = None) -> str:
        labels = list(labels) if labels is not None else [str(i) for i in range(self.k)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["actual\\predicted", *labels])
        for name, row in zip(labels, self.counts):
            w.writerow([name, *(int(c) for c in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> tuple["ConfusionMatrix", list[str]]:
        rows = list(csv.reader(io.StringIO(text)))
        labels = rows[0][1:]
        counts = [[int(c) for c in r[1:]] for r in rows[1:] if r]
        if [r[0] for r in rows[1:] if r] != labels:
            raise ValueError("row labels must match column labels")
        return cls(len(labels), np.array(counts)), labels


def accumulate(cm: ConfusionMatrix, actual: int, predicted: int) -> ConfusionMatrix:
    return cm.accumulate(actual, predicted)


@dataclass(frozen=True)
class BinaryCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def one_vs_rest(cm: ConfusionMatrix, c: int) -> BinaryCounts:
    c = cm._check(c)
    tp = int(cm.counts[c, c])
    fn = int(cm.counts[c, :].sum()) - tp
    fp = int(cm.counts[:, c].sum()) - tp
    return BinaryCounts(tp=tp, fp=fp, tn=cm.total - tp - fp - fn, fn=fn)


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None


def binary_metrics(b: BinaryCounts) -> dict[str, float | None]:
    if b.total < 1:
        raise ValueError("binary counts are empty")
    precision = _ratio(b.tp, b.tp + b.fp)
    recall = _ratio(b.tp, b.tp + b.fn)
    f1 = None
    if precision is not None and recall is not None:
        f1 = _ratio(2.0 * precision * recall, precision + recall)
    return {
        "accuracy": (b.tp + b.tn) / b.total,
        "sensitivity": recall,
        "specificity": _ratio(b.tn, b.tn + b.fp),
        "precision": precision,
        "f1": f1,
    }


@dataclass
class MetricsReport:
    overall_accuracy: float
    per_class: dict[str, dict[str, float | None]]
    macro: dict[str, float | None]
    undefined_count: int
    total: int

    def to_dict(self, digits: int = 6) -> dict:
        def r(x):
            return None if x is None else round(x, digits)

        return {
            "overall_accuracy": r(self.overall_accuracy),
            "per_class": {c: {k: r(v) for k, v in m.items()} for c, m in self.per_class.items()},
            "macro": {k: r(v) for k, v in self.macro.items()},
            "undefined_count": self.undefined_count,
            "total": self.total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def report(cm: ConfusionMatrix, labels: Sequence[str] | None = None) -> MetricsReport:
    """Overall top-1 accuracy plus per-class one-vs-rest and macro metrics."""
    total = cm.total
    if total < 1:
        raise ValueError("confusion matrix is empty")
    labels = list(labels) if labels is not None else [str(i) for i in range(cm.k)]
    if len(labels) != cm.k:
        raise ValueError(f"{len(labels)} labels for a {cm.k}-class matrix")

    per_class = {}
    undefined = 0
    for c, name in enumerate(labels):
        m = binary_metrics(one_vs_rest(cm, c))
        per_class[name] = {k: m[k] for k in PER_CLASS_NAMES}
        undefined += sum(v is None for v in per_class[name].values())

    macro = {}
    for k in PER_CLASS_NAMES:
        vals = [m[k] for m in per_class.values() if m[k] is not None]
        macro[k] = sum(vals) / len(vals) if vals else None

    return MetricsReport(
        overall_accuracy=int(np.trace(cm.counts)) / total,
        per_class=per_class,
        macro=macro,
        undefined_count=undefined,
        total=total,
    )
