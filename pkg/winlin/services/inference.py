from __future__ import annotations

from typing import Callable, Iterable, Union

import numpy as np

from ..exceptions import PreconditionError
from ..models import Module
from ..tensor import Tensor
from ..tensor.functional import stable_sigmoid

FLIPS = ("id", "h", "v", "hv")

_AXES = {"id": (), "h": (-1,), "v": (-2,), "hv": (-2, -1)}

Predictor = Union[Module, Callable[[Tensor], Tensor]]


def _flip(x: np.ndarray, kind: str) -> np.ndarray:
    axes = _AXES[kind]
    return np.ascontiguousarray(np.flip(x, axes)) if axes else x


def predict_probs(model: Predictor, images: np.ndarray) -> np.ndarray:
    """Один проход: sigmoid(logits) для батча [B,3,H,W]."""
    logits = model(Tensor(images))
    return stable_sigmoid(logits.data)


def tta_predict(
    model: Predictor, images: np.ndarray, flips: Iterable[str] = FLIPS
) -> np.ndarray:
    """
    Среднее sigmoid(logits) по отражениям: отражение применяется ко входу
    и снимается с выхода.
    """
    flips = tuple(flips)
    unknown = set(flips) - set(FLIPS)
    if unknown:
        raise PreconditionError(f"unknown flips: {sorted(unknown)}")
    acc = None
    for kind in flips:
        probs = _flip(predict_probs(model, _flip(images, kind)), kind)
        acc = probs if acc is None else acc + probs
    return acc / len(flips)
