"""Accuracy assessment: confusion matrix, overall/per-class accuracy, Cohen's kappa.

Only pixels with a nonzero truth label enter the statistics.  Overall
accuracy is trace/total (the multiclass generalization of (TP+TN)/Total);
per-class accuracy is the recall counts[c][c]/row_c with NaN marking classes
absent from the truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import LabelMask


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K counts; rows are truth classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise ValidationError(f"confusion matrix must be square, got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            raise ValidationError("confusion matrix counts must be integers")
        if (c < 0).any():
            raise ValidationError("confusion matrix counts must be non-negative")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def class_count(self) -> int:
        return self.counts.shape[0]


def confusion_matrix(truth: LabelMask, predicted: LabelMask, class_count: int) -> ConfusionMatrix:
    """Tally (truth, predicted) pairs over pixels with nonzero truth labels."""
    if truth.labels.shape != predicted.labels.shape:
        raise ValidationError(
            f"dimension mismatch: {truth.labels.shape} vs {predicted.labels.shape}"
        )
    if class_count < 1:
        raise ValidationError("class_count must be >= 1")
    sel = truth.labels > 0
    t = truth.labels[sel].astype(np.int64)
    p = predicted.labels[sel].astype(np.int64)
    if t.size == 0:
        raise ValidationError("no labeled pixels to evaluate")
    if t.max() > class_count:
        raise ValidationError(f"truth class {int(t.max())} exceeds class count {class_count}")
    if p.min() < 1 or p.max() > class_count:
        bad = int(p.max()) if p.max() > class_count else int(p.min())
        raise ValidationError(f"prediction class {bad} outside 1..{class_count}")
    flat = (t - 1) * class_count + (p - 1)
    counts = np.bincount(flat, minlength=class_count * class_count)
    return ConfusionMatrix(counts=counts.reshape(class_count, class_count))


def overall_accuracy(cm: ConfusionMatrix) -> float:
    """Fraction of labeled pixels predicted correctly (trace/total)."""
    if cm.total == 0:
        raise ValidationError("empty confusion matrix")
    return float(np.trace(cm.counts)) / float(cm.total)


def cohen_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e)."""
    total = cm.total
    if total == 0:
        raise ValidationError("empty confusion matrix")
    trace = int(np.trace(cm.counts))
    rows = cm.counts.sum(axis=1)
    cols = cm.counts.sum(axis=0)
    pe_num = int((rows * cols).sum())  # p_e = pe_num / total^2, kept in integers
    if pe_num == total * total:
        return 1.0 if trace == total else 0.0
    p_o = trace / total
    p_e = pe_num / (total * total)
    return (p_o - p_e) / (1.0 - p_e)


def per_class_accuracy(cm: ConfusionMatrix) -> np.ndarray:
    """Recall per class; classes with an empty truth row come back as NaN."""
    rows = cm.counts.sum(axis=1).astype(np.float64)
    diag = np.diag(cm.counts).astype(np.float64)
    return np.where(rows > 0, diag / np.where(rows > 0, rows, 1.0), np.nan)
