from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from ..exceptions import GradcheckError, PreconditionError
from .tensor import Tensor

logger = logging.getLogger("winlin.tensor.gradcheck")

FD_STEP = 1e-5


def _element_indices(
    shape: tuple[int, ...], limit: Optional[int], rng: np.random.Generator
) -> list[tuple[int, ...]]:
    total = int(np.prod(shape)) if shape else 1
    if limit is None or limit >= total:
        flat = np.arange(total)
    else:
        flat = np.sort(rng.choice(total, size=limit, replace=False))
    return [tuple(int(i) for i in np.unravel_index(k, shape)) for k in flat]


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    *,
    step: float = FD_STEP,
    max_elements_per_input: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Сравнивает аналитический градиент sum(fn(*inputs)) с центральными
    конечными разностями.

    Возвращает max |g_a - g_n| / max(1, |g_a|, |g_n|) по проверенным элементам.
    max_elements_per_input ограничивает число проверяемых элементов на вход
    (для больших наборов параметров элементы выбираются случайно по seed).
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise PreconditionError(f"gradcheck needs float64 inputs, got {t.dtype}")
        t.zero_grad()

    fn(*inputs).sum().backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for pos, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        for idx in _element_indices(t.shape, max_elements_per_input, rng):
            original = t.data[idx]
            t.data[idx] = original + step
            f_plus = float(fn(*inputs).data.sum())
            t.data[idx] = original - step
            f_minus = float(fn(*inputs).data.sum())
            t.data[idx] = original

            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[pos][idx])
            if not (np.isfinite(a) and np.isfinite(numeric)):
                raise GradcheckError(
                    (pos, *idx), f"non-finite gradient: analytic={a}, numeric={numeric}"
                )
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)

    logger.debug("gradcheck done | inputs=%s | max_rel_error=%.3e", len(inputs), worst)
    return worst
