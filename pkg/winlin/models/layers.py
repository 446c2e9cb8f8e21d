from __future__ import annotations

from typing import Literal, Optional

import numpy as np

from ..attention import AttentionParams, w_lmhsa, w_mhsa_baseline
from ..exceptions import PreconditionError
from ..tensor import Parameter, Tensor
from ..tensor import functional as F
from .module import Module


class Conv2d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        groups: int = 1,
        bias: bool = True,
    ):
        super().__init__()
        fan_in = (in_ch // groups) * kernel * kernel
        self.weight = Parameter(
            rng.standard_normal((out_ch, in_ch // groups, kernel, kernel)) * np.sqrt(2.0 / fan_in),
            dtype=np.float32,
        )
        self.bias = Parameter(np.zeros(out_ch), dtype=np.float32) if bias else None
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = F.BN_EPS, momentum: float = F.BN_MOMENTUM):
        super().__init__()
        self.gamma = Parameter(np.ones(channels), dtype=np.float32)
        self.beta = Parameter(np.zeros(channels), dtype=np.float32)
        self._buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self._buffers["running_var"] = np.ones(channels, dtype=np.float32)
        self.eps = eps
        self.momentum = momentum

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm2d(
            x,
            self.gamma,
            self.beta,
            self._buffers["running_mean"],
            self._buffers["running_var"],
            training=self.training,
            eps=self.eps,
            momentum=self.momentum,
        )


class CBR(Module):
    """Convolution -> BatchNorm -> ReLU6."""

    def __init__(
        self, in_ch: int, out_ch: int, rng: np.random.Generator, kernel: int = 3, stride: int = 1
    ):
        super().__init__()
        self.conv = Conv2d(in_ch, out_ch, kernel, rng, stride=stride, padding=kernel // 2, bias=False)
        self.bn = BatchNorm2d(out_ch)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu6(self.bn(self.conv(x)))


class WindowAttention(Module):
    def __init__(
        self,
        dim: int,
        heads: int,
        window_side: int,
        rng: np.random.Generator,
        kind: Literal["linear", "exact"] = "linear",
    ):
        super().__init__()
        std = dim**-0.5
        self.wq = Parameter(rng.standard_normal((dim, dim)) * std, dtype=np.float32)
        self.wk = Parameter(rng.standard_normal((dim, dim)) * std, dtype=np.float32)
        self.wv = Parameter(rng.standard_normal((dim, dim)) * std, dtype=np.float32)
        self.wo = Parameter(rng.standard_normal((dim, dim)) * std, dtype=np.float32)
        self.dim = dim
        self.heads = heads
        self.window_side = window_side
        self.kind = kind

    def params(self) -> AttentionParams:
        return AttentionParams(self.dim, self.heads, self.wq, self.wk, self.wv, self.wo)

    def forward(self, x: Tensor) -> Tensor:
        if self.kind == "exact":
            return w_mhsa_baseline(x, self.params(), self.window_side)
        return w_lmhsa(x, self.params(), self.window_side)


class ConvMLP(Module):
    """
    C-MLP: 1×1 -> DW 3×3 -> ReLU6 -> 1×1.
    Depth-wise свёртка идёт по всей карте и пересекает границы окон.
    При depthwise=False это обычный точечный MLP (1×1 -> ReLU6 -> 1×1).
    """

    def __init__(self, dim: int, ratio: float, rng: np.random.Generator, depthwise: bool = True):
        super().__init__()
        hidden = int(dim * ratio)
        self.fc1 = Conv2d(dim, hidden, 1, rng)
        self.dw = Conv2d(hidden, hidden, 3, rng, padding=1, groups=hidden) if depthwise else None
        self.fc2 = Conv2d(hidden, dim, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = self.fc1(x)
        if self.dw is not None:
            h = self.dw(h)
        return self.fc2(F.relu6(h))


class BuildFormerBlock(Module):
    """y = x + W-LMHSA(BN(x)); z = y + C-MLP(BN(y))."""

    def __init__(
        self,
        dim: int,
        heads: int,
        window_side: int,
        rng: np.random.Generator,
        mlp_ratio: float = 4.0,
        attention: Literal["linear", "exact"] = "linear",
        mlp: Literal["cmlp", "mlp"] = "cmlp",
    ):
        super().__init__()
        self.norm1 = BatchNorm2d(dim)
        self.attn = WindowAttention(dim, heads, window_side, rng, kind=attention)
        self.norm2 = BatchNorm2d(dim)
        self.mlp = ConvMLP(dim, mlp_ratio, rng, depthwise=mlp == "cmlp")

    def forward(self, x: Tensor) -> Tensor:
        y = F.add(x, self.attn(self.norm1(x)))
        return F.add(y, self.mlp(self.norm2(y)))


class PatchEmbed(Module):
    """Две свёртки 3×3 со страйдом 2 (CBR) до 1/4 и остаток через DW 3×3."""

    def __init__(self, in_ch: int, embed_dim: int, rng: np.random.Generator):
        super().__init__()
        self.stem1 = CBR(in_ch, embed_dim // 2, rng, kernel=3, stride=2)
        self.stem2 = CBR(embed_dim // 2, embed_dim, rng, kernel=3, stride=2)
        self.dw = Conv2d(embed_dim, embed_dim, 3, rng, padding=1, groups=embed_dim, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise PreconditionError(
                f"patch_embed: H, W must be divisible by 4, got {x.shape[2]}x{x.shape[3]}"
            )
        y = self.stem2(self.stem1(x))
        return F.add(y, self.dw(y))


class PatchMerge(Module):
    """BN -> свёртка 2×2/2 (C -> 2C) -> y + DW 3×3(y)."""

    def __init__(self, dim: int, rng: np.random.Generator):
        super().__init__()
        self.norm = BatchNorm2d(dim)
        self.reduce = Conv2d(dim, 2 * dim, 2, rng, stride=2)
        self.dw = Conv2d(2 * dim, 2 * dim, 3, rng, padding=1, groups=2 * dim, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise PreconditionError(
                f"patch_merge: H, W must be even, got {x.shape[2]}x{x.shape[3]}"
            )
        y = self.reduce(self.norm(x))
        return F.add(y, self.dw(y))


class Stage(Module):
    def __init__(self, merge: Optional[PatchMerge], blocks: list[BuildFormerBlock]):
        super().__init__()
        self.merge = merge
        self.blocks = blocks

    def forward(self, x: Tensor) -> Tensor:
        if self.merge is not None:
            x = self.merge(x)
        for block in self.blocks:
            x = block(x)
        return x
