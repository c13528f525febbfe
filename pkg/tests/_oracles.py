"""Brute-force metric oracles, deliberately independent of stamp.metrics.

Everything here is O(N^2) pair counting or exhaustive threshold sweeps:
slow, obvious, and easy to audit by eye.
"""

import numpy as np


def auroc_oracle(y_true, scores):
    pos = [s for t, s in zip(y_true, scores) if t == 1]
    neg = [s for t, s in zip(y_true, scores) if t == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def auc_pr_oracle(y_true, scores):
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    ap = 0.0
    prev_recall = 0.0
    for theta in sorted(set(s.tolist()), reverse=True):
        pred = s >= theta
        tp = int(((y == 1) & pred).sum())
        fp = int(((y == 0) & pred).sum())
        precision = tp / (tp + fp)
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def balanced_accuracy_oracle(y_true, y_pred):
    recalls = []
    for c in sorted(set(y_true)):
        idx = [i for i, t in enumerate(y_true) if t == c]
        recalls.append(sum(y_pred[i] == c for i in idx) / len(idx))
    return sum(recalls) / len(recalls)


def accuracy_oracle(y_true, y_pred):
    return sum(t == p for t, p in zip(y_true, y_pred)) / len(y_true)


def kappa_oracle(y_true, y_pred):
    n = len(y_true)
    classes = sorted(set(y_true) | set(y_pred))
    p_o = accuracy_oracle(y_true, y_pred)
    p_e = 0.0
    for c in classes:
        p_e += (list(y_true).count(c) / n) * (list(y_pred).count(c) / n)
    if p_e == 1.0:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def weighted_f1_oracle(y_true, y_pred):
    n = len(y_true)
    total = 0.0
    for c in sorted(set(y_true)):
        tp = sum(t == c and p == c for t, p in zip(y_true, y_pred))
        fp = sum(t != c and p == c for t, p in zip(y_true, y_pred))
        fn = sum(t == c and p != c for t, p in zip(y_true, y_pred))
        f1 = 0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn)
        total += f1 * (tp + fn)
    return total / n


def random_binary_instance(rng, max_n=200):
    """Labels with both classes present plus scores with deliberate ties."""
    n = int(rng.integers(4, max_n + 1))
    y = rng.integers(0, 2, size=n)
    y[0], y[1] = 0, 1
    scores = rng.normal(size=n)
    if rng.random() < 0.5:
        scores = np.round(scores, int(rng.integers(0, 2)))   # heavy ties
    return y, scores


def random_multiclass_instance(rng, max_n=200, n_classes=4):
    n = int(rng.integers(n_classes, max_n + 1))
    y = rng.integers(0, n_classes, size=n)
    pred = np.where(rng.random(n) < 0.6, y, rng.integers(0, n_classes, size=n))
    return y, pred
