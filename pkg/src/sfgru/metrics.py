"""Binary classification metrics: confusion counts, accuracy, precision,
recall, F1 and rank-based ROC-AUC."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    auc: Optional[float]
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_samples: int
    precision_defined: bool = True
    recall_defined: bool = True

    @property
    def balanced_accuracy(self):
        tpr = self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0
        tnr = self.tn / (self.tn + self.fp) if self.tn + self.fp else 0.0
        return 0.5 * (tpr + tnr)

    def as_dict(self):
        return {
            "acc": self.accuracy, "auc": self.auc, "f1": self.f1,
            "precision": self.precision, "recall": self.recall,
        }


def _labels(labels):
    y = np.asarray(labels)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return y.astype(int)


def roc_auc(scores, labels):
    """Probability that a random positive outscores a random negative (ties count 1/2).

    Returns None when either class is absent.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _labels(labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_report(preds, labels, scores=None):
    p = _labels(preds)
    y = _labels(labels)
    if len(p) != len(y) or len(y) == 0:
        raise ValueError("predictions and labels must be non-empty and equally long")
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    tn = int(np.sum((p == 0) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    n = len(y)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        accuracy=(tp + tn) / n,
        auc=None if scores is None else roc_auc(scores, y),
        f1=f1, precision=precision, recall=recall,
        tp=tp, fp=fp, tn=tn, fn=fn, n_samples=n,
        precision_defined=bool(tp + fp), recall_defined=bool(tp + fn),
    )
