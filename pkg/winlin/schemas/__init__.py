from .bench import BenchConfig, FlopReport
from .data import DataConfig, SynthParams
from .metrics import ConfusionCounts, GradcheckRow, MetricReport
from .model import ModelConfig
from .run import RunConfig, RunSection
from .train import TrainConfig

__all__ = [
    "BenchConfig",
    "FlopReport",
    "DataConfig",
    "SynthParams",
    "ConfusionCounts",
    "GradcheckRow",
    "MetricReport",
    "ModelConfig",
    "RunConfig",
    "RunSection",
    "TrainConfig",
]
