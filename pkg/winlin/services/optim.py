from __future__ import annotations

import logging
import math
from typing import Iterable, Optional

import numpy as np

from ..exceptions import NonFiniteGradientError, PreconditionError
from ..models import OptimizerState
from ..tensor import Parameter

logger = logging.getLogger("winlin.services.optim")


def cosine_lr(step: int, total_steps: int, base: float, min_lr: float) -> float:
    """min + 0.5·(base − min)·(1 + cos(π·step/total)), без прогрева, по шагам."""
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise PreconditionError(f"cosine_lr: step {step} outside [0, {total_steps}]")
    return min_lr + 0.5 * (base - min_lr) * (1.0 + math.cos(math.pi * step / total_steps))


def clip_grad_norm(params: Iterable[Parameter], max_norm: float) -> float:
    """Масштабирует градиенты так, чтобы их общая L2-норма не превышала max_norm."""
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= g.dtype.type(scale)
    return total


class AdamW:
    """
    AdamW с раздельным weight decay: сначала p ← p − lr·wd·p, затем шаг Adam
    по моментам с поправкой смещения. Состояние хранится по именам параметров.
    """

    def __init__(
        self,
        named_params: Iterable[tuple[str, Parameter]],
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params: dict[str, Parameter] = dict(named_params)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float) -> None:
        # проверка до любых изменений: шаг либо применяется целиком, либо нет
        for name, p in self.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NonFiniteGradientError(name)

        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(p.dtype, copy=False)
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v

            data = p.data
            if self.weight_decay:
                data = data - lr * self.weight_decay * data
            data = data - lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = data.astype(p.dtype, copy=False)

    def export_state(self) -> OptimizerState:
        return OptimizerState(
            step=self.step_count,
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
        )

    def load_state(self, state: Optional[OptimizerState]) -> None:
        if state is None:
            return
        unknown = (set(state.m) | set(state.v)) - set(self.params)
        if unknown:
            logger.warning("optimizer state for unknown params ignored | count=%d", len(unknown))
        self.step_count = state.step
        self.m = {k: np.asarray(a, dtype=self.params[k].dtype) for k, a in state.m.items() if k in self.params}
        self.v = {k: np.asarray(a, dtype=self.params[k].dtype) for k, a in state.v.items() if k in self.params}
