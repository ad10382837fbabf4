"""Classification metrics: rank AUC with ROC points, confusion-derived scores."""
from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from ._validation import check_binary_labels
from .exceptions import DegenerateStatisticWarning, SingleClassError

ROC_GRID = np.linspace(0.0, 1.0, 101)


class Confusion(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return Confusion(*(a + b for a, b in zip(self, other)))

    def to_dict(self):
        return self._asdict()


def confusion_counts(y_true, y_pred) -> Confusion:
    y_true = check_binary_labels(y_true)
    y_pred = check_binary_labels(y_pred, len(y_true))
    return Confusion(
        int(np.sum((y_pred == 1) & (y_true == 1))),
        int(np.sum((y_pred == 1) & (y_true == 0))),
        int(np.sum((y_pred == 0) & (y_true == 0))),
        int(np.sum((y_pred == 0) & (y_true == 1))),
    )


def roc_auc(scores, labels):
    """Mann-Whitney AUC (ties count one half) and the ROC polyline.

    ROC points come from sweeping a ``score >= t`` threshold down through
    every distinct score, from (0, 0) to (1, 1); the trapezoidal area under
    them equals the returned AUC.
    """
    scores = np.asarray(scores, dtype=float)
    labels = check_binary_labels(labels, len(scores))
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        raise SingleClassError("AUC needs both classes")
    ranks = rankdata(scores, method="average")
    auc = (ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0)

    thresholds = np.unique(scores)[::-1]
    tp = np.array([np.sum(pos & (scores >= t)) for t in thresholds])
    fp = np.array([np.sum(~pos & (scores >= t)) for t in thresholds])
    fpr = np.concatenate([[0.0], fp / n0])
    tpr = np.concatenate([[0.0], tp / n1])
    return float(auc), list(zip(fpr.tolist(), tpr.tolist()))


def trapezoid_area(roc_points) -> float:
    pts = np.asarray(roc_points, dtype=float)
    return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


def mean_roc(curves, grid=ROC_GRID):
    """Vertical averaging of several ROC polylines on a fixed FPR grid."""
    rows = []
    for pts in curves:
        pts = np.asarray(pts, dtype=float)
        # at a vertical segment take its top, so interpolation is right-continuous
        fpr, tpr = pts[:, 0], pts[:, 1]
        uniq = np.unique(fpr)
        top = np.array([tpr[fpr == f].max() for f in uniq])
        row = np.interp(grid, uniq, top)
        row[0] = 0.0 if uniq[0] > 0 else top[0]
        rows.append(row)
    rows = np.array(rows)
    return {
        "fpr": grid.tolist(),
        "tpr_mean": rows.mean(axis=0).tolist(),
        "tpr_std": rows.std(axis=0, ddof=1).tolist() if len(rows) > 1 else [0.0] * len(grid),
    }


def f1_score(confusion: Confusion):
    """Positive-class F1, ``2tp / (2tp + fp + fn)``; ``None`` when undefined."""
    tp, fp, _, fn = confusion
    denom = 2 * tp + fp + fn
    if denom == 0:
        warnings.warn("F1 undefined: no positives predicted or present",
                      DegenerateStatisticWarning, stacklevel=2)
        return None
    return 2 * tp / denom


def sensitivity_specificity(confusion: Confusion):
    """``(tp/(tp+fn), tn/(tn+fp))``; an undefined ratio is returned as ``None``."""
    tp, fp, tn, fn = confusion
    out = []
    for num, denom, name in ((tp, tp + fn, "sensitivity"), (tn, tn + fp, "specificity")):
        if denom == 0:
            warnings.warn(f"{name} undefined: class absent", DegenerateStatisticWarning, stacklevel=2)
            out.append(None)
        else:
            out.append(num / denom)
    return tuple(out)
