"""
BuildFormer: двухпутевая сеть для бинарной сегментации зданий.

GCP  patch_embed -> 4 стадии BuildFormerBlock (между стадиями patch_merge),
     карты на 1/4, 1/8, 1/16, 1/32.
SCP  шесть CBR 3×3, выход на 1/4.
CAM  латеральные 1×1 до fpn_dim, сверху вниз upsample×2 + сложение + CBR,
     конкатенация с SCP и CBR до head_hidden.
Голова: 1×1 до одного канала и билинейный upsample ×4. На выходе логиты.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from ..exceptions import ConfigurationError, PreconditionError
from ..schemas import ModelConfig
from ..tensor import Tensor
from ..tensor import functional as F
from .layers import CBR, BuildFormerBlock, Conv2d, PatchEmbed, PatchMerge, Stage
from .module import Module

logger = logging.getLogger("winlin.models")

IN_CHANNELS = 3


class SpatialPath(Module):
    def __init__(self, channels: list[int], strides: list[int], rng: np.random.Generator):
        super().__init__()
        if int(np.prod(strides)) != 4:
            raise ConfigurationError(f"spatial path strides {strides} must multiply to 4")
        widths = [IN_CHANNELS, *channels]
        self.blocks = [
            CBR(widths[i], widths[i + 1], rng, kernel=3, stride=s) for i, s in enumerate(strides)
        ]

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class ContextAggregation(Module):
    def __init__(
        self,
        stage_channels: list[int],
        fpn_dim: int,
        spatial_dim: Optional[int],
        head_hidden: int,
        rng: np.random.Generator,
    ):
        super().__init__()
        self.laterals = [Conv2d(c, fpn_dim, 1, rng) for c in stage_channels]
        self.smooth = [CBR(fpn_dim, fpn_dim, rng) for _ in stage_channels]
        self.use_spatial = spatial_dim is not None
        self.fuse = CBR(fpn_dim + (spatial_dim or 0), head_hidden, rng)

    def forward(self, feats: list[Tensor], spatial: Optional[Tensor] = None) -> Tensor:
        base_h, base_w = feats[0].shape[2:]
        for i, f in enumerate(feats):
            expected = (base_h // 2**i, base_w // 2**i)
            if f.shape[2:] != expected:
                raise ConfigurationError(
                    f"context_aggregate: map {i + 1} is {f.shape[2:]}, expected {expected}"
                )
        if self.use_spatial:
            if spatial is None:
                raise ConfigurationError("context_aggregate: spatial feature is required")
            if spatial.shape[2:] != (base_h, base_w):
                raise ConfigurationError(
                    f"context_aggregate: spatial map {spatial.shape[2:]} != {(base_h, base_w)}"
                )

        lat = [conv(f) for conv, f in zip(self.laterals, feats)]
        p = self.smooth[-1](lat[-1])
        for i in range(len(lat) - 2, -1, -1):
            p = self.smooth[i](F.add(F.upsample_bilinear(p, 2), lat[i]))
        if self.use_spatial:
            p = F.concat([p, spatial], axis=1)
        return self.fuse(p)


class BuildFormer(Module):
    def __init__(self, config: Optional[ModelConfig] = None, seed: int = 0):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)

        self.patch_embed = PatchEmbed(IN_CHANNELS, cfg.stage_channels[0], rng)
        self.stages = []
        for i, (dim, depth, heads) in enumerate(
            zip(cfg.stage_channels, cfg.stage_depths, cfg.stage_heads)
        ):
            merge = PatchMerge(cfg.stage_channels[i - 1], rng) if i else None
            blocks = [
                BuildFormerBlock(
                    dim,
                    heads,
                    cfg.window_side,
                    rng,
                    mlp_ratio=cfg.mlp_ratio,
                    attention=cfg.attention,
                    mlp=cfg.mlp,
                )
                for _ in range(depth)
            ]
            self.stages.append(Stage(merge, blocks))

        self.spatial = (
            SpatialPath(cfg.scp_channels, cfg.scp_strides, rng) if cfg.use_scp else None
        )
        self.aggregate = ContextAggregation(
            cfg.stage_channels,
            cfg.fpn_dim,
            cfg.scp_channels[-1] if cfg.use_scp else None,
            cfg.head_hidden,
            rng,
        )
        self.head = Conv2d(cfg.head_hidden, 1, 1, rng)
        self.assign_names()
        logger.debug(
            "model built | attention=%s | mlp=%s | scp=%s | params=%d",
            cfg.attention,
            cfg.mlp,
            cfg.use_scp,
            sum(p.size for p in self.parameters()),
        )

    def gcp_forward(self, img: Tensor) -> list[Tensor]:
        x = self.patch_embed(img)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats

    def scp_forward(self, img: Tensor) -> Tensor:
        if self.spatial is None:
            raise ConfigurationError("spatial path is disabled (use_scp=false)")
        if img.shape[2] % 4 or img.shape[3] % 4:
            raise PreconditionError(
                f"scp_forward: H, W must be divisible by 4, got {img.shape[2]}x{img.shape[3]}"
            )
        return self.spatial(img)

    def context_aggregate(self, feats: list[Tensor], spatial: Optional[Tensor] = None) -> Tensor:
        return self.aggregate(feats, spatial)

    def forward(self, img: Tensor) -> Tensor:
        if img.ndim != 4 or img.shape[1] != IN_CHANNELS:
            raise PreconditionError(f"expected [B, 3, H, W] input, got {img.shape}")
        h, w = img.shape[2:]
        if h % self.config.downsample or w % self.config.downsample:
            raise PreconditionError(
                f"input {h}x{w} is not divisible by {self.config.downsample}; "
                "pad it first (pad_to_multiple)"
            )
        feats = self.gcp_forward(img)
        spatial = self.scp_forward(img) if self.spatial is not None else None
        fused = self.context_aggregate(feats, spatial)
        return F.upsample_bilinear(self.head(fused), 4)


def _conv(cin: int, cout: int, k: int, groups: int = 1, bias: bool = True) -> int:
    return cout * (cin // groups) * k * k + (cout if bias else 0)


def _cbr(cin: int, cout: int, k: int = 3) -> int:
    return _conv(cin, cout, k, bias=False) + 2 * cout


def expected_parameter_count(config: ModelConfig) -> int:
    """Число обучаемых параметров, посчитанное по формулам слоёв без сборки модели."""
    chans = config.stage_channels
    embed = chans[0]
    total = _cbr(IN_CHANNELS, embed // 2) + _cbr(embed // 2, embed)
    total += _conv(embed, embed, 3, groups=embed, bias=False)

    for i, (dim, depth) in enumerate(zip(chans, config.stage_depths)):
        if i:
            prev = chans[i - 1]
            total += 2 * prev + _conv(prev, dim, 2) + _conv(dim, dim, 3, groups=dim, bias=False)
        hidden = int(dim * config.mlp_ratio)
        block = 2 * dim + 4 * dim * dim + 2 * dim
        block += _conv(dim, hidden, 1) + _conv(hidden, dim, 1)
        if config.mlp == "cmlp":
            block += _conv(hidden, hidden, 3, groups=hidden)
        total += depth * block

    spatial_dim = 0
    if config.use_scp:
        widths = [IN_CHANNELS, *config.scp_channels]
        total += sum(_cbr(a, b) for a, b in zip(widths, widths[1:]))
        spatial_dim = config.scp_channels[-1]

    total += sum(_conv(c, config.fpn_dim, 1) for c in chans)
    total += len(chans) * _cbr(config.fpn_dim, config.fpn_dim)
    total += _cbr(config.fpn_dim + spatial_dim, config.head_hidden)
    total += _conv(config.head_hidden, 1, 1)
    return total
