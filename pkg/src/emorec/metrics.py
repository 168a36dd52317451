"""Evaluation metrics: confusion matrices, weighted and unweighted accuracy.

Weighted accuracy (WA) is plain sample accuracy as a percentage. Unweighted
accuracy (UA) is the mean of per-class recalls, which ignores class
imbalance. Classes that never occur in the truth are excluded from the UA
mean; the report records how many were excluded.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import EMOTION_NAMES
from .errors import ParameterError, ShapeError, UndefinedMetricError

N_CLASSES = 7


@dataclass(frozen=True)
class ConfusionMatrix:
    """7x7 count grid; rows are true classes, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES):
            raise ShapeError(f"confusion matrix must be 7x7, got {counts.shape}")
        if (counts < 0).any():
            raise ParameterError("confusion matrix counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion(true_labels, predicted_labels) -> ConfusionMatrix:
    """Count (true, predicted) pairs into a 7x7 matrix."""
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted_labels, dtype=np.int64).ravel()
    if t.size != p.size:
        raise ShapeError(f"label lists differ in length: {t.size} vs {p.size}")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    if t.size:
        if t.min() < 0 or t.max() >= N_CLASSES or p.min() < 0 or p.max() >= N_CLASSES:
            raise ParameterError("labels must be emotion codes 0..6")
        np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def weighted_accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        raise UndefinedMetricError("weighted accuracy is undefined on an empty matrix")
    return 100.0 * float(np.trace(cm.counts)) / total


def per_class_recall(cm: ConfusionMatrix):
    """Recall percent per class; None where the class never occurs in truth."""
    rows = cm.row_sums()
    diag = np.diag(cm.counts)
    out = []
    for c in range(N_CLASSES):
        if rows[c] == 0:
            out.append(None)
        else:
            out.append(100.0 * float(diag[c]) / float(rows[c]))
    return tuple(out)


def unweighted_accuracy(cm: ConfusionMatrix) -> float:
    recalls = [r for r in per_class_recall(cm) if r is not None]
    if not recalls:
        raise UndefinedMetricError("unweighted accuracy is undefined with no observed classes")
    return float(np.mean(recalls))


@dataclass(frozen=True)
class EvalReport:
    wa: float
    ua: float
    wa_plus_ua: float
    per_class_recall: tuple
    confusion: ConfusionMatrix
    n_samples: int
    n_excluded_classes: int

    def __post_init__(self):
        if abs(self.wa_plus_ua - (self.wa + self.ua)) > 1e-9:
            raise ParameterError("wa_plus_ua must equal wa + ua")
        if not (0.0 <= self.wa <= 100.0 and 0.0 <= self.ua <= 100.0):
            raise ParameterError("accuracies must lie in [0, 100]")


def report(true_labels, predicted_labels) -> EvalReport:
    """Evaluate predictions against truth and assemble the full report."""
    cm = confusion(true_labels, predicted_labels)
    wa = weighted_accuracy(cm)
    recalls = per_class_recall(cm)
    ua = unweighted_accuracy(cm)
    return EvalReport(
        wa=wa,
        ua=ua,
        wa_plus_ua=wa + ua,
        per_class_recall=recalls,
        confusion=cm,
        n_samples=cm.total,
        n_excluded_classes=sum(1 for r in recalls if r is None),
    )


def report_from_confusion(cm: ConfusionMatrix) -> EvalReport:
    """Assemble a report directly from a prebuilt confusion matrix."""
    wa = weighted_accuracy(cm)
    recalls = per_class_recall(cm)
    ua = unweighted_accuracy(cm)
    return EvalReport(wa, ua, wa + ua, recalls, cm, cm.total,
                      sum(1 for r in recalls if r is None))


def report_to_dict(rep: EvalReport) -> dict:
    return {
        "wa": rep.wa,
        "ua": rep.ua,
        "wa_plus_ua": rep.wa_plus_ua,
        "per_class_recall": {
            EMOTION_NAMES[c]: rep.per_class_recall[c] for c in range(N_CLASSES)
        },
        "confusion": rep.confusion.counts.tolist(),
        "n_samples": rep.n_samples,
        "n_excluded_classes": rep.n_excluded_classes,
    }


def report_from_dict(doc: dict) -> EvalReport:
    cm = ConfusionMatrix(np.asarray(doc["confusion"], dtype=np.int64))
    recalls = tuple(doc["per_class_recall"][name] for name in EMOTION_NAMES)
    return EvalReport(doc["wa"], doc["ua"], doc["wa_plus_ua"], recalls, cm,
                      doc["n_samples"], doc["n_excluded_classes"])


def report_to_json(rep: EvalReport) -> str:
    return json.dumps(report_to_dict(rep), sort_keys=True, indent=2) + "\n"


def report_to_text(rep: EvalReport) -> str:
    """Render a compact two-decimal table plus per-class recalls."""
    lines = []
    lines.append(f"{'WA':>10} {'UA':>10} {'WA + UA':>10}")
    lines.append(f"{rep.wa:>10.2f} {rep.ua:>10.2f} {rep.wa_plus_ua:>10.2f}")
    lines.append("")
    lines.append("per-class recall:")
    for c, name in enumerate(EMOTION_NAMES):
        r = rep.per_class_recall[c]
        shown = "n/a" if r is None else f"{r:.2f}"
        lines.append(f"  {name:<10} {shown:>7}")
    lines.append(f"samples: {rep.n_samples}")
    return "\n".join(lines) + "\n"
