from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from ..data import SPLITS, DatasetManifest, SegSample, load_dataset, synth_generate, write_split
from ..exceptions import DatasetError
from ..schemas import DataConfig
from .timing import timed

logger = logging.getLogger("winlin.services.dataset")


def generate_dataset(
    config: DataConfig, seed: int, root: Optional[Path | str] = None
) -> dict[str, DatasetManifest]:
    """Синтетический набор в root/{train,val,test}/{images,masks}, у каждого сплита свой поток rng."""
    root = Path(root or config.root)
    counts = {"train": config.n_train, "val": config.n_val, "test": config.n_test}
    manifests = {}
    with timed("generate dataset", logger, root=str(root), seed=seed, size=config.size):
        for stream, split in enumerate(SPLITS):
            samples = synth_generate(seed, counts[split], config.size, config.synth, stream=stream)
            manifests[split] = write_split(root, split, samples, config.image_format)
    return manifests


def load_split(root: Path | str, split: str) -> list[SegSample]:
    manifest = DatasetManifest.read(root, split)
    if not manifest.pairs:
        raise DatasetError(manifest.split_dir, "split is empty")
    samples = list(load_dataset(manifest))
    logger.info("split loaded | split=%s | samples=%d", split, len(samples))
    return samples
