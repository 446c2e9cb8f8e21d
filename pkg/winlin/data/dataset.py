from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterator

from ..exceptions import DatasetError
from .io import read_image, read_mask, write_image, write_mask
from .sample import DatasetManifest, SegSample

logger = logging.getLogger("winlin.data")

MASK_EXT = {"ppm": "pgm", "png": "png"}


def load_dataset(manifest: DatasetManifest) -> Iterator[SegSample]:
    """Примеры в порядке манифеста; изображение и маска должны совпадать по размеру."""
    for image_path, mask_path in manifest.pairs:
        image = read_image(image_path)
        mask = read_mask(mask_path)
        if image.shape[1:] != mask.shape[1:]:
            raise DatasetError(
                mask_path,
                f"mask {mask.shape[1]}x{mask.shape[2]} does not match image "
                f"{image.shape[1]}x{image.shape[2]}",
            )
        yield SegSample(image=image, mask=mask, id=Path(image_path).stem)


def write_split(
    root: Path | str, split: str, samples: list[SegSample], image_format: str = "ppm"
) -> DatasetManifest:
    manifest = DatasetManifest(Path(root), split)
    mask_ext = MASK_EXT[image_format]
    for sample in samples:
        image_path = manifest.split_dir / "images" / f"{sample.id}.{image_format}"
        mask_path = manifest.split_dir / "masks" / f"{sample.id}.{mask_ext}"
        write_image(image_path, sample.image)
        write_mask(mask_path, sample.mask)
        manifest.pairs.append((image_path, mask_path))
    manifest.write()
    logger.info("split written | split=%s | samples=%d | root=%s", split, len(samples), root)
    return manifest
