from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from .bench import BenchConfig
from .data import DataConfig
from .model import ModelConfig
from .train import TrainConfig


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: Optional[int] = None
    log_level: Optional[str] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    run: RunSection = Field(default_factory=RunSection)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
