"""Classification metrics for seed recovery: precision/recall/F1 and ROC-AUC."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def precision_recall_f1(pred, truth):
    """(PR, RE, F1) for binary vectors; PR is 0 when nothing is predicted."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise ValueError("prediction/truth lengths differ")
    if not truth.any():
        raise ValueError("truth has no positives")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn)
    f1 = 2.0 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return precision, recall, f1


def roc_auc(scores, truth) -> float:
    """Probability a random positive outscores a random negative; ties count 1/2.

    Computed by sorting, but numerically identical to the all-pairs count:
    the numerator is (wins + ties/2) accumulated exactly in halves.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError("score/truth lengths differ")
    pos = scores[truth]
    neg = scores[~truth]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need at least one positive and one negative")
    neg_sorted = np.sort(neg)
    lo = np.searchsorted(neg_sorted, pos, side="left")
    hi = np.searchsorted(neg_sorted, pos, side="right")
    numerator = float(lo.sum()) + 0.5 * float((hi - lo).sum())
    return numerator / (len(pos) * len(neg))


@dataclass
class MetricsReport:
    """Per-trial metric values plus their aggregates for one method."""

    method: str
    precision: list = field(default_factory=list)
    recall: list = field(default_factory=list)
    f1: list = field(default_factory=list)
    auc: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (trial index, message)

    def add_trial(self, precision: float, recall: float, f1: float, auc: float) -> None:
        self.precision.append(precision)
        self.recall.append(recall)
        self.f1.append(f1)
        self.auc.append(auc)

    @property
    def trials(self) -> int:
        return len(self.f1)

    def mean(self, name: str) -> float:
        values = getattr(self, name)
        return float(np.mean(values)) if values else float("nan")

    def std(self, name: str) -> float:
        values = getattr(self, name)
        return float(np.std(values)) if values else float("nan")

    def summary(self) -> dict:
        out = {"method": self.method, "trials": self.trials}
        for name in ("precision", "recall", "f1", "auc"):
            out[f"{name}_mean"] = self.mean(name)
            out[f"{name}_std"] = self.std(name)
        if self.failures:
            out["failed_trials"] = [list(f) for f in self.failures]
        return out
