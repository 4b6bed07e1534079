"""Confusion-matrix metrics, ROC/AUC, and detection-to-truth matching."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass
class RocCurve:
    points: list  # (fpr, tpr) sorted by threshold descending
    auc: float
    thresholds: list = field(default_factory=list)


def _safe_div(num, den):
    """None (explicit undefined) when the denominator is zero."""
    return None if den == 0 else num / den


def confusion_and_metrics(labels, predictions) -> dict:
    """Counts and the standard derived rates; 1 = whistle.

    Zero-denominator metrics come back as None, never as 0.
    """
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape:
        raise ValueError(f"length mismatch: {labels.shape} vs {predictions.shape}")
    bad = set(np.unique(labels)) | set(np.unique(predictions))
    if not bad <= {0, 1}:
        raise ValueError(f"labels/predictions must be binary, got values {sorted(bad)}")

    tp = int(((labels == 1) & (predictions == 1)).sum())
    fp = int(((labels == 0) & (predictions == 1)).sum())
    tn = int(((labels == 0) & (predictions == 0)).sum())
    fn = int(((labels == 1) & (predictions == 0)).sum())
    cm = ConfusionMatrix(tp, fp, tn, fn)
    recall = _safe_div(tp, tp + fn)
    return {
        "confusion": cm,
        "accuracy": _safe_div(tp + tn, cm.n),
        "precision": _safe_div(tp, tp + fp),
        "recall": recall,
        "tpr": recall,
        "fpr": _safe_div(fp, fp + tn),
    }


def roc_and_auc(scores, labels) -> RocCurve:
    """Threshold sweep over distinct scores (ties grouped), trapezoidal AUC.

    The curve starts at (0,0) and ends at (1,1); AUC equals the pair-counting
    statistic P(score+ > score-) + 0.5 * P(tie).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC requires both classes present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    points = [(0.0, 0.0)]
    thresholds = [float("inf")]
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int((sorted_labels[i:j] == 1).sum())
        fp += int((sorted_labels[i:j] == 0).sum())
        points.append((fp / n_neg, tp / n_pos))
        thresholds.append(float(sorted_scores[i]))
        i = j

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=points, auc=auc, thresholds=thresholds)


def pair_count_auc(scores, labels) -> float:
    """Brute-force AUC: fraction of (pos, neg) pairs correctly ranked."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need both classes")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(pos) * len(neg)))


def match_detections(events, truths, min_overlap_fraction: float = 0.05) -> dict:
    """Match detected events against whistle truth intervals.

    A pair is eligible when the event overlaps the truth by at least
    min_overlap_fraction of the truth's duration. Matching is greedy by
    largest overlap; each event and each truth is used at most once.
    Unmatched events are false positives, unmatched truths false negatives.
    """
    candidates = []
    for ei, event in enumerate(events):
        for ti, truth in enumerate(truths):
            overlap = min(event.end_s, truth.end_s) - max(event.start_s, truth.start_s)
            needed = min_overlap_fraction * (truth.end_s - truth.start_s)
            if overlap > 0 and overlap >= needed:
                candidates.append((overlap, ei, ti))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    matched_events: set = set()
    matched_truths: set = set()
    pairs = []
    for overlap, ei, ti in candidates:
        if ei in matched_events or ti in matched_truths:
            continue
        matched_events.add(ei)
        matched_truths.add(ti)
        pairs.append((ei, ti, overlap))

    tp = len(pairs)
    return {
        "tp": tp,
        "fp": len(events) - tp,
        "fn": len(truths) - tp,
        "pairs": pairs,
    }
