"""Verdict and evidence metrics."""

import numpy as np

from .corpus import N_LABELS
from .errors import DimensionError


def evidence_prf(predicted, gold):
    """Set precision / recall / F1 of predicted evidence indices."""
    pred, ref = set(predicted), set(gold or ())
    if not pred:
        p = 1.0 if not ref else 0.0
    else:
        p = len(pred & ref) / len(pred)
    r = len(pred & ref) / len(ref) if ref else (1.0 if not pred else 0.0)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def per_label_f1(preds, golds, n_labels=N_LABELS):
    preds, golds = np.asarray(preds), np.asarray(golds)
    if preds.shape != golds.shape:
        raise DimensionError("preds and golds differ in length")
    out = np.zeros(n_labels)
    for lab in range(n_labels):
        tp = np.sum((preds == lab) & (golds == lab))
        fp = np.sum((preds == lab) & (golds != lab))
        fn = np.sum((preds != lab) & (golds == lab))
        denom = 2 * tp + fp + fn
        out[lab] = 2 * tp / denom if denom else 0.0
    return out


def macro_f1(preds, golds, n_labels=N_LABELS):
    """Unweighted mean of per-label F1; labels absent from both sides count as 0."""
    return float(per_label_f1(preds, golds, n_labels).mean())


def contiguity_runs(mask, boundaries=()):
    """Number of maximal runs of selected positions, split at document boundaries.

    ``boundaries`` are edge indices ``i`` separating sentence ``i`` from ``i + 1``.
    """
    sel = np.asarray(getattr(mask, "values", mask)) > 0
    cuts = set(boundaries)
    runs = 0
    for i, on in enumerate(sel):
        if on and (i == 0 or not sel[i - 1] or (i - 1) in cuts):
            runs += 1
    return runs
