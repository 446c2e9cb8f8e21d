from __future__ import annotations

import math
from dataclasses import dataclass

from ..exceptions import DimensionError, PreconditionError
from ..tensor import Tensor
from ..tensor import functional as F


@dataclass(frozen=True)
class WindowLayout:
    window_side: int
    original_h: int
    original_w: int
    padded_h: int
    padded_w: int
    n_windows: int

    @property
    def tokens(self) -> int:
        """N: число токенов в окне (квадрат стороны окна)."""
        return self.window_side * self.window_side

    @property
    def grid(self) -> tuple[int, int]:
        return self.padded_h // self.window_side, self.padded_w // self.window_side

    @classmethod
    def for_shape(cls, height: int, width: int, window_side: int) -> "WindowLayout":
        if window_side < 1:
            raise PreconditionError(f"window side must be >= 1, got {window_side}")
        padded_h = math.ceil(height / window_side) * window_side
        padded_w = math.ceil(width / window_side) * window_side
        return cls(
            window_side=window_side,
            original_h=height,
            original_w=width,
            padded_h=padded_h,
            padded_w=padded_w,
            n_windows=(padded_h // window_side) * (padded_w // window_side),
        )


def window_partition(x: Tensor, window_side: int) -> tuple[Tensor, WindowLayout]:
    """
    [B, C, H, W] -> [B * nW, N, C].
    Карта дополняется нулями справа/снизу до кратности окну; окна идут
    построчно, токен k окна: пиксель (k // w, k % w).
    """
    if x.ndim != 4:
        raise DimensionError(f"window_partition: expected [B,C,H,W], got {x.shape}")
    batch, channels, height, width = x.shape
    layout = WindowLayout.for_shape(height, width, window_side)
    w = window_side
    gh, gw = layout.grid

    t = F.pad2d(x, layout.padded_h - height, layout.padded_w - width)
    t = F.reshape(t, (batch, channels, gh, w, gw, w))
    t = F.transpose(t, (0, 2, 4, 3, 5, 1))
    t = F.reshape(t, (batch * gh * gw, w * w, channels))
    return t, layout


def window_reverse(windows: Tensor, layout: WindowLayout, crop: bool = True) -> Tensor:
    """Обратная к window_partition; crop=True обрезает дополнение."""
    gh, gw = layout.grid
    per_image = gh * gw
    if windows.ndim != 3 or windows.shape[0] % per_image or windows.shape[1] != layout.tokens:
        raise DimensionError(
            f"window_reverse: {windows.shape} does not fit layout {layout}"
        )
    batch = windows.shape[0] // per_image
    channels = windows.shape[2]
    w = layout.window_side

    t = F.reshape(windows, (batch, gh, gw, w, w, channels))
    t = F.transpose(t, (0, 5, 1, 3, 2, 4))
    t = F.reshape(t, (batch, channels, layout.padded_h, layout.padded_w))
    if crop:
        t = F.crop2d(t, layout.original_h, layout.original_w)
    return t
