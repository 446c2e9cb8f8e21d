from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

Kernel = Literal["exact", "linear"]


class BenchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dims: tuple[int, int] = (256, 256)
    dim: int = Field(default=96, ge=1)
    heads: int = Field(default=3, ge=1)
    windows: list[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    kernels: list[Kernel] = Field(default_factory=lambda: ["exact", "linear"])
    repeats: int = Field(default=3, ge=3)
    warmup: int = Field(default=1, ge=0)
    token_budget: int = Field(default=4096, ge=1)
    memory_limit_bytes: int = Field(default=2 * 1024**3, ge=1)

    @model_validator(mode="after")
    def _check_heads(self) -> "BenchConfig":
        if self.dim % self.heads:
            raise ValueError("bench dim must be divisible by heads")
        if any(w < 1 for w in self.windows):
            raise ValueError("window sides must be positive")
        return self


class FlopReport(BaseModel):
    kernel: Kernel
    window_side: int
    height: int
    width: int
    dim: int
    heads: int
    flops_total: int = Field(ge=0)
    projection_flops: int = Field(ge=0)
    peak_buffer_bytes: int = Field(default=0, ge=0)
    wall_ms: Optional[float] = Field(default=None, ge=0)
    oom: bool = False
