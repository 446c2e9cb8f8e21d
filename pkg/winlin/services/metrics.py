from __future__ import annotations

from typing import Optional

import numpy as np

from ..exceptions import DimensionError, PreconditionError
from ..schemas import ConfusionCounts, MetricReport


def confusion_counts(
    pred_probs: np.ndarray,
    target: np.ndarray,
    valid: Optional[np.ndarray] = None,
    threshold: float = 0.5,
) -> ConfusionCounts:
    """TP/FP/FN/TN только по valid-пикселям; предсказание бинаризуется по threshold."""
    if not 0.0 < threshold < 1.0:
        raise PreconditionError(f"threshold must be in (0, 1), got {threshold}")
    pred_probs = np.asarray(pred_probs)
    target = np.asarray(target)
    if pred_probs.shape != target.shape:
        raise DimensionError(f"prediction {pred_probs.shape} vs target {target.shape}")
    keep = np.ones(target.shape, dtype=bool) if valid is None else np.asarray(valid) > 0.5
    if keep.shape != target.shape:
        raise DimensionError(f"valid mask {keep.shape} vs target {target.shape}")

    pred = pred_probs > threshold
    truth = target > 0.5
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & truth & keep)),
        fp=int(np.count_nonzero(pred & ~truth & keep)),
        fn=int(np.count_nonzero(~pred & truth & keep)),
        tn=int(np.count_nonzero(~pred & ~truth & keep)),
    )


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def report_from_counts(counts: ConfusionCounts) -> MetricReport:
    """
    IoU = TP/(TP+FP+FN), Precision = TP/(TP+FP), Recall = TP/(TP+FN),
    F1 = 2TP/(2TP+FP+FN). Нулевой знаменатель даёт 0 и degenerate=True.
    """
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    iou, d1 = _ratio(tp, tp + fp + fn)
    precision, d2 = _ratio(tp, tp + fp)
    recall, d3 = _ratio(tp, tp + fn)
    f1, d4 = _ratio(2 * tp, 2 * tp + fp + fn)
    return MetricReport(
        iou=iou,
        precision=precision,
        recall=recall,
        f1=f1,
        degenerate=d1 or d2 or d3 or d4,
        counts=counts,
    )


def compute_metrics(
    pred_probs: np.ndarray,
    target: np.ndarray,
    valid: Optional[np.ndarray] = None,
    threshold: float = 0.5,
) -> MetricReport:
    return report_from_counts(confusion_counts(pred_probs, target, valid, threshold))
