from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

EMBED_DIM = 96
DOWNSAMPLE = 32
CHANNELS_PER_HEAD = 32


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    stage_channels: list[int] = Field(default_factory=lambda: [96, 192, 384, 768])
    stage_depths: list[int] = Field(default_factory=lambda: [1, 1, 2, 1])
    window_side: int = Field(default=16, ge=1)
    mlp_ratio: float = Field(default=4.0, gt=0)
    scp_channels: list[int] = Field(default_factory=lambda: [64, 64, 128, 128, 128, 128])
    scp_strides: list[int] = Field(default_factory=lambda: [2, 2, 1, 1, 1, 1])
    fpn_dim: int = Field(default=384, ge=1)
    head_hidden: int = Field(default=256, ge=1)
    attention: Literal["linear", "exact"] = "linear"
    mlp: Literal["cmlp", "mlp"] = "cmlp"
    use_scp: bool = True

    @field_validator("stage_channels")
    @classmethod
    def _check_channels(cls, v: list[int]) -> list[int]:
        if len(v) != 4:
            raise ValueError("stage_channels needs 4 values")
        if v[0] != EMBED_DIM:
            raise ValueError(f"stage_channels must start at {EMBED_DIM}")
        if any(b != 2 * a for a, b in zip(v, v[1:])):
            raise ValueError("stage_channels must double from stage to stage")
        if any(c % CHANNELS_PER_HEAD for c in v):
            raise ValueError(f"stage_channels must be multiples of {CHANNELS_PER_HEAD}")
        return v

    @field_validator("stage_depths")
    @classmethod
    def _check_depths(cls, v: list[int]) -> list[int]:
        if len(v) != 4 or any(d < 1 for d in v):
            raise ValueError("stage_depths needs 4 positive values")
        return v

    @model_validator(mode="after")
    def _check_scp(self) -> "ModelConfig":
        if len(self.scp_channels) != 6 or len(self.scp_strides) != 6:
            raise ValueError("scp_channels and scp_strides need 6 values each")
        if any(c < 1 for c in self.scp_channels) or any(s < 1 for s in self.scp_strides):
            raise ValueError("scp_channels and scp_strides must be positive")
        if math.prod(self.scp_strides) != 4:
            raise ValueError("product of scp_strides must be 4 (output at 1/4)")
        return self

    @property
    def stage_heads(self) -> list[int]:
        return [c // CHANNELS_PER_HEAD for c in self.stage_channels]

    @property
    def downsample(self) -> int:
        return DOWNSAMPLE

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        return cls(**{"stage_depths": [1, 1, 2, 1], "window_side": 4, **overrides})

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        return cls(**{"stage_depths": [2, 2, 6, 2], "window_side": 16, **overrides})
