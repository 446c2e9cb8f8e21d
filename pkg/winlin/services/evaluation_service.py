from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

from ..data import SegSample, pad_to_multiple
from ..models import Module, load_checkpoint, restore_model
from ..schemas import ConfusionCounts, MetricReport, ModelConfig
from .inference import Predictor, predict_probs, tta_predict
from .metrics import confusion_counts, report_from_counts
from .timing import timed

logger = logging.getLogger("winlin.services.evaluation")


def evaluate(
    model: Predictor,
    samples: Sequence[SegSample],
    use_tta: bool = True,
    pad_multiple: int = 32,
    threshold: float = 0.5,
) -> MetricReport:
    """
    Дополняет каждый пример до кратного pad_multiple, предсказывает
    (с TTA или одним проходом) и суммирует матрицу ошибок по valid-пикселям
    всего набора.
    """
    was_training = isinstance(model, Module) and model.training
    if isinstance(model, Module):
        model.eval()
    counts = ConfusionCounts()
    with timed("evaluate", logger, samples=len(samples), tta=use_tta):
        for sample in samples:
            padded = pad_to_multiple(sample, pad_multiple)
            images = padded.image[None]
            probs = tta_predict(model, images) if use_tta else predict_probs(model, images)
            counts = counts + confusion_counts(probs[0], padded.mask, padded.valid, threshold)
    if was_training:
        model.train()
    report = report_from_counts(counts)
    logger.info(
        "evaluate done | tta=%s | iou=%.4f | precision=%.4f | recall=%.4f | f1=%.4f",
        use_tta,
        report.iou,
        report.precision,
        report.recall,
        report.f1,
    )
    return report


def evaluate_checkpoint(
    path: Path | str,
    samples: Sequence[SegSample],
    use_tta: bool = True,
    expected: Optional[ModelConfig] = None,
    pad_multiple: int = 32,
) -> MetricReport:
    model = restore_model(load_checkpoint(path), expected)
    return evaluate(model, samples, use_tta=use_tta, pad_multiple=pad_multiple)
