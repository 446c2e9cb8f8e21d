"""
Ядра внимания внутри окна.

attention_exact             Softmax_row(QKᵀ/s)·V, O(N²·d) на окно.
attention_kernelized_oracle Двойной цикл с sim(q, k) = 1 + cos(q, k); эталон.
attention_linear            То же, что оракул, но с перестановкой скобок:
                            Σ_j sim(q_i,k_j) v_j = Σ_j v_j + q̂_i (K̂ᵀV), O(N·d²).
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..exceptions import DegenerateInputError, DimensionError, PreconditionError
from ..tensor import Tensor
from ..tensor import functional as F
from .memory import BufferTracker

NORM_EPS = 1e-12
LINEAR_EPS = 1e-6


def _check_qkv(op: str, q: Tensor, k: Tensor, v: Tensor) -> None:
    if q.ndim < 2 or q.shape != k.shape or q.shape[:-1] != v.shape[:-1]:
        raise DimensionError(f"{op}: incompatible shapes Q{q.shape} K{k.shape} V{v.shape}")


def _swap_last(t: Tensor) -> Tensor:
    axes = list(range(t.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return F.transpose(t, axes)


def taylor_similarity(q: np.ndarray, k: np.ndarray, eps: float = NORM_EPS) -> float:
    """1 + q̂ᵀk̂ ∈ [0, 2]."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    qn = q / max(float(np.linalg.norm(q)), eps)
    kn = k / max(float(np.linalg.norm(k)), eps)
    return float(np.clip(1.0 + qn @ kn, 0.0, 2.0))


def attention_exact(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    scale: float = 1.0,
    tracker: Optional[BufferTracker] = None,
) -> Tensor:
    _check_qkv("attention_exact", q, k, v)
    if scale == 0:
        raise PreconditionError("attention_exact: scale must be non-zero")
    scores = F.matmul(q, _swap_last(k))
    if scale != 1.0:
        scores = F.mul(scores, 1.0 / scale)
    held = tracker.allocate(scores.data) if tracker is not None else 0
    out = F.matmul(F.softmax_rows(scores), v)
    if tracker is not None:
        tracker.release(held)
    return out


def attention_kernelized_oracle(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, eps: float = LINEAR_EPS
) -> np.ndarray:
    """
    Эталон O(N²): строка i = Σ_j sim(q_i, k_j) v_j / Σ_j sim(q_i, k_j).
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or q.shape != k.shape or q.shape[0] != v.shape[0]:
        raise DimensionError(f"oracle: incompatible shapes Q{q.shape} K{k.shape} V{v.shape}")
    n = q.shape[0]
    out = np.zeros_like(v)
    for i in range(n):
        num = np.zeros(v.shape[1])
        den = 0.0
        for j in range(n):
            s = taylor_similarity(q[i], k[j])
            num += s * v[j]
            den += s
        if den < eps:
            raise DegenerateInputError(
                f"query {i} is antipodal to every key (denominator {den:.3e})"
            )
        out[i] = num / den
    return out


def attention_linear(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    eps: float = LINEAR_EPS,
    tracker: Optional[BufferTracker] = None,
) -> Tensor:
    """
    Линейное внимание для Q, K, V формы [..., N, d].

    числитель_i   = Σ_j v_j + q̂_i·(K̂ᵀV)
    знаменатель_i = max(N + q̂_i·Σ_j k̂_j, eps)
    Масштаб s здесь не используется: нормировка делается через L2.

    Знаменатель ограничивается снизу, а не увеличивается на eps. Так как
    q̂·k̂ ≥ -1, знаменатель ≥ 0, и max срабатывает только когда все
    q̂_i·k̂_j = -1. При N = 1 (окно w = 1) выход в точности равен v,
    как у softmax-варианта; добавка +eps дала бы v·(1+c)/(1+c+eps).
    """
    _check_qkv("attention_linear", q, k, v)
    n = q.shape[-2]
    lead = q.shape[:-2]
    dtype = q.dtype

    qh = F.l2_normalize_rows(q, NORM_EPS)
    kh = F.l2_normalize_rows(k, NORM_EPS)
    kh_t = _swap_last(kh)

    ones_col = Tensor(np.ones((*lead, n, 1), dtype=dtype))
    ones_row = Tensor(np.ones((*lead, 1, n), dtype=dtype))
    ones_d = Tensor(np.ones((*lead, 1, v.shape[-1]), dtype=dtype))

    kv = F.matmul(kh_t, v)
    k_sum = F.matmul(kh_t, ones_col)
    held = tracker.allocate(kv.data, k_sum.data) if tracker is not None else 0

    numerator = F.add(F.matmul(qh, kv), F.matmul(ones_col, F.matmul(ones_row, v)))
    denominator = F.clamp_min(F.add(F.matmul(qh, k_sum), float(n)), eps)
    out = F.div(numerator, F.matmul(denominator, ones_d))

    if tracker is not None:
        tracker.release(held)
    return out
