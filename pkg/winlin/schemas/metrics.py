from __future__ import annotations

from pydantic import BaseModel, Field


class ConfusionCounts(BaseModel):
    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )


class MetricReport(BaseModel):
    iou: float = Field(ge=0, le=1)
    precision: float = Field(ge=0, le=1)
    recall: float = Field(ge=0, le=1)
    f1: float = Field(ge=0, le=1)
    degenerate: bool = False
    counts: ConfusionCounts = Field(default_factory=ConfusionCounts)

    def csv_row(self, split: str) -> str:
        return f"{split},{self.iou:.6f},{self.precision:.6f},{self.recall:.6f},{self.f1:.6f}"


class GradcheckRow(BaseModel):
    op: str
    seed: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance
