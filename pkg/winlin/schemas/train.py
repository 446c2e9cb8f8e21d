from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    base_lr: float = Field(default=1e-3, gt=0)
    min_lr: float = Field(default=1e-6, gt=0)
    epochs: int = Field(default=105, ge=1)
    batch_size: int = Field(default=8, ge=1)
    weight_decay: float = Field(default=0.01, ge=0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)
    seed: Optional[int] = None
    crop_size: Optional[int] = Field(default=None, ge=1)
    flip_p: float = Field(default=0.5, ge=0, le=1)
    eval_every: int = Field(default=10, ge=1)
    grad_clip: float = Field(default=0.0, ge=0)
    use_tta: bool = True

    @model_validator(mode="after")
    def _check_lr(self) -> "TrainConfig":
        if self.min_lr > self.base_lr:
            raise ValueError("min_lr must not exceed base_lr")
        if not all(0 <= b < 1 for b in self.betas):
            raise ValueError("betas must lie in [0, 1)")
        return self

    @classmethod
    def fine_tune(cls, **overrides) -> "TrainConfig":
        return cls(**{"base_lr": 5e-4, **overrides})

    @classmethod
    def toy(cls, **overrides) -> "TrainConfig":
        """
        Переобучение на 16 синтетических примерах 64×64: батч 4 даёт 1200 шагов
        за 300 эпох, без отражений и weight decay, оценка без TTA.
        """
        preset = {
            "epochs": 300,
            "batch_size": 4,
            "base_lr": 1e-3,
            "min_lr": 1e-5,
            "weight_decay": 0.0,
            "flip_p": 0.0,
            "eval_every": 50,
            "use_tta": False,
        }
        return cls(**{**preset, **overrides})
