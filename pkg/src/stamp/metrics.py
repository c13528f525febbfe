"""Evaluation metrics and seed-level aggregation.

Binary tasks report balanced accuracy, AUROC and AUC-PR; multiclass tasks
report balanced accuracy, Cohen's kappa and weighted F1. Everything is
computed here directly (no external metrics library) so the definitions
are pinned: AUROC is the Mann-Whitney statistic with ties at half weight,
AUC-PR is average precision over distinct descending thresholds, and the
0.5 threshold classifies ties as positive.
"""

import dataclasses
import warnings

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, UndefinedMetricError, UsageError

BINARY_METRICS = ("balanced_accuracy", "auroc", "auc_pr")
MULTICLASS_METRICS = ("balanced_accuracy", "cohens_kappa", "weighted_f1")


def _labels(y, name):
    y = np.asarray(y)
    if y.size == 0:
        raise DataError(f"{name} is empty")
    return y.astype(np.int64).reshape(-1)


def _pair(y_true, y_pred):
    t = _labels(y_true, "y_true")
    p = _labels(y_pred, "y_pred")
    if t.shape != p.shape:
        raise DataError(f"length mismatch: {t.shape[0]} labels vs {p.shape[0]} predictions")
    return t, p


def labels_from_probs(probs):
    """Hard labels: threshold class-1 probability at 0.5 when binary, else argmax."""
    probs = np.asarray(probs)
    if probs.ndim != 2:
        raise DataError(f"probability matrix must be 2-d, got shape {probs.shape}")
    if probs.shape[1] == 2:
        return (probs[:, 1] >= 0.5).astype(np.int64)
    return probs.argmax(axis=1).astype(np.int64)


def confusion_matrix(y_true, y_pred, n_classes=None):
    t, p = _pair(y_true, y_pred)
    if n_classes is None:
        n_classes = int(max(t.max(), p.max())) + 1
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def balanced_accuracy(y_true, y_pred):
    """Unweighted mean recall over the classes present in y_true."""
    cm = confusion_matrix(y_true, y_pred)
    support = cm.sum(axis=1)
    present = support > 0
    recalls = cm.diagonal()[present] / support[present]
    return float(recalls.mean())


def auroc(y_true, scores):
    """P(random positive outscores random negative), ties counted half."""
    t = _labels(y_true, "y_true")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if t.shape != s.shape:
        raise DataError(f"length mismatch: {t.shape[0]} labels vs {s.shape[0]} scores")
    n_pos = int((t == 1).sum())
    n_neg = int((t == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes in y_true")
    ranks = rankdata(s)   # average rank resolves ties at half weight
    return float((ranks[t == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_pr(y_true, scores):
    """Average precision: sum of precision-weighted recall increments."""
    t = _labels(y_true, "y_true")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if t.shape != s.shape:
        raise DataError(f"length mismatch: {t.shape[0]} labels vs {s.shape[0]} scores")
    n_pos = int((t == 1).sum())
    if n_pos == 0 or n_pos == t.size:
        raise UndefinedMetricError("AUC-PR needs both classes in y_true")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    tp = np.cumsum(t == 1)
    fp = np.cumsum(t == 0)
    # evaluate only where the score changes: tie blocks share one threshold
    last_of_block = np.r_[s[1:] != s[:-1], True]
    tp, fp = tp[last_of_block], fp[last_of_block]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def cohens_kappa(y_true, y_pred):
    """Agreement beyond chance: (p_o - p_e) / (1 - p_e)."""
    cm = confusion_matrix(y_true, y_pred).astype(np.float64)
    n = cm.sum()
    p_o = cm.trace() / n
    p_e = float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / (n * n)
    if p_e == 1.0:
        warnings.warn("kappa undefined (single class on both sides); returning 0")
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def weighted_f1(y_true, y_pred):
    """Support-weighted mean per-class F1; empty classes score 0."""
    cm = confusion_matrix(y_true, y_pred).astype(np.float64)
    tp = cm.diagonal()
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    f1 = np.zeros_like(tp)
    denom = support + predicted   # = 2TP + FP + FN
    np.divide(2.0 * tp, denom, out=f1, where=denom > 0)
    return float((f1 * support).sum() / support.sum())


@dataclasses.dataclass
class EvalReport:
    task: str                     # "binary" | "multiclass"
    n_samples: int
    metrics: dict
    confusion: np.ndarray

    def to_text(self):
        lines = [f"task={self.task}", f"n_samples={self.n_samples}"]
        lines += [f"{k}={v:.6f}" for k, v in self.metrics.items()]
        lines.append("confusion=" + ";".join(",".join(map(str, row)) for row in self.confusion))
        return "\n".join(lines)


def evaluate(y_true, probs, n_classes=None):
    """Full report for one split from true labels and predicted probabilities."""
    t = _labels(y_true, "y_true")
    probs = np.asarray(probs, dtype=np.float64)
    if n_classes is None:
        n_classes = probs.shape[1]
    pred = labels_from_probs(probs)
    if t.min() < 0 or t.max() >= n_classes:
        raise DataError(
            f"labels outside [0, {n_classes}): found range "
            f"[{int(t.min())}, {int(t.max())}]"
        )
    cm = confusion_matrix(t, pred, n_classes)
    if n_classes == 2:
        metrics = {
            "balanced_accuracy": balanced_accuracy(t, pred),
            "auroc": auroc(t, probs[:, 1]),
            "auc_pr": auc_pr(t, probs[:, 1]),
        }
        task = "binary"
    else:
        metrics = {
            "balanced_accuracy": balanced_accuracy(t, pred),
            "cohens_kappa": cohens_kappa(t, pred),
            "weighted_f1": weighted_f1(t, pred),
        }
        task = "multiclass"
    return EvalReport(task=task, n_samples=t.size, metrics=metrics, confusion=cm)


def monitor_metric(y_true, probs):
    """(name, value) used for checkpoint selection.

    AUROC for binary tasks, Cohen's kappa for multiclass; if AUROC is
    undefined because validation holds one class, fall back to balanced
    accuracy so training can still rank epochs.
    """
    t = _labels(y_true, "y_true")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[1] == 2:
        try:
            return "auroc", auroc(t, probs[:, 1])
        except UndefinedMetricError:
            warnings.warn("validation AUROC undefined; monitoring balanced accuracy")
            return "balanced_accuracy", balanced_accuracy(t, labels_from_probs(probs))
    return "cohens_kappa", cohens_kappa(t, labels_from_probs(probs))


@dataclasses.dataclass
class SeedAggregate:
    task: str
    n_reports: int
    stats: dict                   # metric -> (mean, std)

    def to_text(self):
        lines = [f"task={self.task}", f"n_reports={self.n_reports}"]
        for k, (mean, std) in self.stats.items():
            lines.append(f"{k}_mean={mean:.6f}")
            lines.append(f"{k}_std={std:.6f}")
        return "\n".join(lines)


def aggregate_seeds(reports):
    """Mean and (n-1)-denominator std of each metric across seed reports."""
    if not reports:
        raise UsageError("aggregate_seeds needs at least one report")
    kinds = {r.task for r in reports}
    if len(kinds) > 1:
        raise UsageError(f"cannot aggregate mixed task kinds {sorted(kinds)}")
    names = list(reports[0].metrics)
    stats = {}
    for name in names:
        vals = np.array([r.metrics[name] for r in reports], dtype=np.float64)
        std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        stats[name] = (float(vals.mean()), std)
    return SeedAggregate(task=reports[0].task, n_reports=len(reports), stats=stats)
