"""
Совместная функция потерь для бинарной сегментации:

    L = BCE(logits, Y) + Dice(sigmoid(logits), Y) + BCE(𝓛(sigmoid(logits)), 𝓛(Y) > 0)

𝓛: свёртка с ядром Лапласа, затем |·| и обрезка до [0,1].
Все члены усредняются только по valid-пикселям; перед 𝓛 карты умножаются
на valid, поэтому содержимое дополнения не влияет ни на один член.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..exceptions import DimensionError
from ..tensor import Function, Tensor
from ..tensor import functional as F

logger = logging.getLogger("winlin.services.losses")

LAPLACIAN_KERNEL = np.array([[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]], dtype=np.float64)
DICE_SMOOTH = 1.0
PROB_EPS = 1e-7

ArrayOrTensor = Union[np.ndarray, Tensor]


def _array(x: ArrayOrTensor, like: Tensor) -> np.ndarray:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if arr.shape != like.shape:
        raise DimensionError(f"loss inputs disagree: {arr.shape} vs {like.shape}")
    return arr.astype(like.dtype, copy=False)


def laplacian_boundary(x: ArrayOrTensor) -> Tensor:
    """
    |Laplace(x)| с нулевым дополнением 1, обрезанный до [0,1]. x: [B,1,H,W].
    Для константной единичной карты рамка по краю изображения даёт 1.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim != 4 or x.shape[1] != 1:
        raise DimensionError(f"laplacian_boundary expects [B,1,H,W], got {x.shape}")
    kernel = Tensor(LAPLACIAN_KERNEL[None, None].astype(x.dtype))
    return F.abs_clamp01(F.conv2d(x, kernel, padding=1))


class BCEWithLogits(Function):
    def forward(self, x: np.ndarray, *, targets: np.ndarray, valid: np.ndarray) -> np.ndarray:
        n = float(valid.sum())
        # max(x,0) - x·t + log(1 + e^{-|x|})
        per_pixel = np.maximum(x, 0) - x * targets + np.log1p(np.exp(-np.abs(x)))
        self.save_for_backward(x, targets, valid, n)
        if n == 0:
            return np.zeros((), dtype=x.dtype)
        return np.asarray((per_pixel * valid).sum() / n, dtype=x.dtype)

    def backward(self, grad: np.ndarray):
        x, targets, valid, n = self.saved
        if n == 0:
            return (np.zeros_like(x),)
        return (grad * valid * (F.stable_sigmoid(x) - targets) / n,)


class BCEProbs(Function):
    def forward(self, p: np.ndarray, *, targets: np.ndarray, valid: np.ndarray) -> np.ndarray:
        n = float(valid.sum())
        inside = (p > PROB_EPS) & (p < 1 - PROB_EPS)
        pc = np.clip(p, PROB_EPS, 1 - PROB_EPS)
        per_pixel = -(targets * np.log(pc) + (1 - targets) * np.log1p(-pc))
        self.save_for_backward(pc, inside, targets, valid, n)
        if n == 0:
            return np.zeros((), dtype=p.dtype)
        return np.asarray((per_pixel * valid).sum() / n, dtype=p.dtype)

    def backward(self, grad: np.ndarray):
        pc, inside, targets, valid, n = self.saved
        if n == 0:
            return (np.zeros_like(pc),)
        dp = (pc - targets) / (pc * (1 - pc))
        return (grad * valid * inside * dp / n,)


class DiceLoss(Function):
    def forward(
        self, p: np.ndarray, *, targets: np.ndarray, valid: np.ndarray, smooth: float
    ) -> np.ndarray:
        pv = p * valid
        gv = targets * valid
        inter = float((pv * gv).sum())
        denom = float(pv.sum() + gv.sum()) + smooth
        self.save_for_backward(gv, valid, inter, denom, smooth)
        return np.asarray(1.0 - (2.0 * inter + smooth) / denom, dtype=p.dtype)

    def backward(self, grad: np.ndarray):
        gv, valid, inter, denom, smooth = self.saved
        dp = -valid * (2.0 * gv * denom - (2.0 * inter + smooth)) / (denom * denom)
        return (grad * dp,)


def _warn_empty(op: str, valid: np.ndarray) -> None:
    if not valid.any():
        logger.warning("%s | no valid pixels | loss defined as 0", op)


def bce_with_logits(logits: Tensor, targets: ArrayOrTensor, valid: ArrayOrTensor) -> Tensor:
    t, v = _array(targets, logits), _array(valid, logits)
    _warn_empty("bce_with_logits", v)
    return BCEWithLogits.apply(logits, targets=t, valid=v)


def bce_probs(probs: Tensor, targets: ArrayOrTensor, valid: ArrayOrTensor) -> Tensor:
    t, v = _array(targets, probs), _array(valid, probs)
    _warn_empty("bce_probs", v)
    return BCEProbs.apply(probs, targets=t, valid=v)


def dice_loss(
    probs: Tensor, targets: ArrayOrTensor, valid: ArrayOrTensor, smooth: float = DICE_SMOOTH
) -> Tensor:
    t, v = _array(targets, probs), _array(valid, probs)
    return DiceLoss.apply(probs, targets=t, valid=v, smooth=float(smooth))


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    ce: float
    dice: float
    boundary: float
    empty_valid: bool = False


def joint_loss(
    logits: Tensor, target: ArrayOrTensor, valid: ArrayOrTensor
) -> tuple[Tensor, LossBreakdown]:
    t, v = _array(target, logits), _array(valid, logits)
    probs = F.sigmoid(logits)

    ce = bce_with_logits(logits, t, v)
    dice = dice_loss(probs, t, v)

    pred_boundary = laplacian_boundary(F.mul(probs, Tensor(v)))
    true_boundary = (laplacian_boundary(t * v).data > 0).astype(logits.dtype)
    boundary = bce_probs(pred_boundary, true_boundary, v)

    total = F.add(F.add(ce, dice), boundary)
    breakdown = LossBreakdown(
        total=total.item(),
        ce=ce.item(),
        dice=dice.item(),
        boundary=boundary.item(),
        empty_valid=not v.any(),
    )
    return total, breakdown
