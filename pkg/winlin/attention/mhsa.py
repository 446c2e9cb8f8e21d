from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from ..exceptions import ConfigurationError
from ..tensor import Tensor
from ..tensor import functional as F
from .kernels import LINEAR_EPS, attention_exact, attention_linear
from .memory import BufferTracker
from .windows import window_partition, window_reverse

Core = Callable[[Tensor, Tensor, Tensor], Tensor]


@dataclass
class AttentionParams:
    """Проекции W_q, W_k, W_v, W_o (D×D, общие для всех окон) и число голов."""

    dim: int
    heads: int
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.heads < 1 or self.dim % self.heads:
            raise ConfigurationError(
                f"attention dim {self.dim} is not divisible by heads {self.heads}"
            )
        for name in ("wq", "wk", "wv", "wo"):
            shape = getattr(self, name).shape
            if shape != (self.dim, self.dim):
                raise ConfigurationError(
                    f"projection {name} has shape {shape}, expected {(self.dim, self.dim)}"
                )

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


def _split_heads(t: Tensor, heads: int) -> Tensor:
    bn, n, c = t.shape
    t = F.reshape(t, (bn, n, heads, c // heads))
    return F.transpose(t, (0, 2, 1, 3))


def _merge_heads(t: Tensor) -> Tensor:
    bn, h, n, d = t.shape
    t = F.transpose(t, (0, 2, 1, 3))
    return F.reshape(t, (bn, n, h * d))


def windowed_attention(x: Tensor, params: AttentionParams, window_side: int, core: Core) -> Tensor:
    """
    Общая схема W-MHSA / W-LMHSA: окна -> проекции -> ядро по головам ->
    конкатенация голов -> W_o -> обратная сборка и обрезка дополнения.
    """
    if x.ndim != 4 or x.shape[1] != params.dim:
        raise ConfigurationError(
            f"input channels {x.shape[1] if x.ndim == 4 else x.shape} != attention dim {params.dim}"
        )
    tokens, layout = window_partition(x, window_side)
    q = _split_heads(F.matmul(tokens, params.wq), params.heads)
    k = _split_heads(F.matmul(tokens, params.wk), params.heads)
    v = _split_heads(F.matmul(tokens, params.wv), params.heads)
    out = F.matmul(_merge_heads(core(q, k, v)), params.wo)
    return window_reverse(out, layout)


def w_lmhsa(
    x: Tensor,
    params: AttentionParams,
    window_side: int,
    eps: float = LINEAR_EPS,
    tracker: Optional[BufferTracker] = None,
) -> Tensor:
    return windowed_attention(
        x,
        params,
        window_side,
        lambda q, k, v: attention_linear(q, k, v, eps=eps, tracker=tracker),
    )


def w_mhsa_baseline(
    x: Tensor,
    params: AttentionParams,
    window_side: int,
    tracker: Optional[BufferTracker] = None,
) -> Tensor:
    return windowed_attention(
        x,
        params,
        window_side,
        lambda q, k, v: attention_exact(q, k, v, scale=params.scale, tracker=tracker),
    )
