from .buildformer import BuildFormer, ContextAggregation, SpatialPath, expected_parameter_count
from .checkpoint import (
    Checkpoint,
    OptimizerState,
    check_config,
    load_checkpoint,
    load_into,
    restore_model,
    save_checkpoint,
    snapshot,
)
from .layers import (
    CBR,
    BatchNorm2d,
    BuildFormerBlock,
    Conv2d,
    ConvMLP,
    PatchEmbed,
    PatchMerge,
    WindowAttention,
)
from .module import Module, count_parameters

__all__ = [
    "CBR",
    "BatchNorm2d",
    "BuildFormer",
    "BuildFormerBlock",
    "Checkpoint",
    "ContextAggregation",
    "Conv2d",
    "ConvMLP",
    "Module",
    "OptimizerState",
    "PatchEmbed",
    "PatchMerge",
    "SpatialPath",
    "WindowAttention",
    "check_config",
    "count_parameters",
    "expected_parameter_count",
    "load_checkpoint",
    "load_into",
    "restore_model",
    "save_checkpoint",
    "snapshot",
]
