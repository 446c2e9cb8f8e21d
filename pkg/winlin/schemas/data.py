from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SynthParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    min_buildings: int = Field(default=1, ge=1)
    max_buildings: int = Field(default=8, ge=1)
    min_fraction: float = Field(default=0.05, gt=0, lt=1)
    max_fraction: float = Field(default=0.4, gt=0, lt=1)
    l_shape_prob: float = Field(default=0.3, ge=0, le=1)
    adjacent_prob: float = Field(default=0.25, ge=0, le=1)
    tiny_prob: float = Field(default=0.2, ge=0, le=1)
    noise_scale: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self) -> "SynthParams":
        if self.min_buildings > self.max_buildings:
            raise ValueError("min_buildings must not exceed max_buildings")
        if self.min_fraction > self.max_fraction:
            raise ValueError("min_fraction must not exceed max_fraction")
        return self


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    root: str = "data"
    size: int = Field(default=64, ge=8)
    n_train: int = Field(default=16, ge=1)
    n_val: int = Field(default=4, ge=0)
    n_test: int = Field(default=4, ge=0)
    pad_multiple: int = Field(default=32, ge=1)
    image_format: str = Field(default="ppm", pattern="^(ppm|png)$")
    synth: SynthParams = Field(default_factory=SynthParams)
