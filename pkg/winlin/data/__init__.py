from .dataset import load_dataset, write_split
from .io import read_image, read_mask, write_image, write_mask
from .sample import SPLITS, DatasetManifest, SegSample
from .synth import synth_generate, synth_sample
from .transforms import flip_augment, pad_to_multiple, pad_to_size, random_crop, stack_batch

__all__ = [
    "SPLITS",
    "DatasetManifest",
    "SegSample",
    "flip_augment",
    "load_dataset",
    "pad_to_multiple",
    "pad_to_size",
    "random_crop",
    "read_image",
    "read_mask",
    "stack_batch",
    "synth_generate",
    "synth_sample",
    "write_image",
    "write_mask",
    "write_split",
]
