from .kernels import (
    LINEAR_EPS,
    attention_exact,
    attention_kernelized_oracle,
    attention_linear,
    taylor_similarity,
)
from .memory import BufferTracker
from .mhsa import AttentionParams, w_lmhsa, w_mhsa_baseline, windowed_attention
from .windows import WindowLayout, window_partition, window_reverse

__all__ = [
    "LINEAR_EPS",
    "AttentionParams",
    "BufferTracker",
    "WindowLayout",
    "attention_exact",
    "attention_kernelized_oracle",
    "attention_linear",
    "taylor_similarity",
    "w_lmhsa",
    "w_mhsa_baseline",
    "window_partition",
    "window_reverse",
    "windowed_attention",
]
