from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..exceptions import DatasetError, DimensionError

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.csv"


@dataclass
class SegSample:
    """
    Один пример: image [3,H,W] в [0,1], mask и valid [1,H,W] в {0,1}.
    valid = 0 ровно на пикселях дополнения.
    """

    image: np.ndarray
    mask: np.ndarray
    valid: Optional[np.ndarray] = None
    id: str = ""

    def __post_init__(self) -> None:
        if self.valid is None:
            self.valid = np.ones_like(self.mask, dtype=np.float32)
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise DimensionError(f"sample {self.id!r}: image must be [3,H,W], got {self.image.shape}")
        spatial = self.image.shape[1:]
        for name in ("mask", "valid"):
            arr = getattr(self, name)
            if arr.shape != (1, *spatial):
                raise DimensionError(
                    f"sample {self.id!r}: {name} shape {arr.shape} != {(1, *spatial)}"
                )

    @property
    def height(self) -> int:
        return self.image.shape[1]

    @property
    def width(self) -> int:
        return self.image.shape[2]

    def replace(self, **changes) -> "SegSample":
        fields = {"image": self.image, "mask": self.mask, "valid": self.valid, "id": self.id}
        fields.update(changes)
        return SegSample(**fields)


@dataclass
class DatasetManifest:
    root: Path
    split: str
    pairs: list[tuple[Path, Path]] = field(default_factory=list)

    @property
    def split_dir(self) -> Path:
        return Path(self.root) / self.split

    @property
    def path(self) -> Path:
        return self.split_dir / MANIFEST_NAME

    def __len__(self) -> int:
        return len(self.pairs)

    def write(self) -> Path:
        self.split_dir.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image", "mask"])
            for image, mask in self.pairs:
                writer.writerow(
                    [Path(image).relative_to(self.split_dir), Path(mask).relative_to(self.split_dir)]
                )
        return self.path

    @classmethod
    def read(cls, root: Path | str, split: str) -> "DatasetManifest":
        """
        Читает manifest.csv сплита; если его нет, собирает пары по
        images/<id>.* и masks/<id>.* в порядке имён.
        """
        manifest = cls(Path(root), split)
        if manifest.path.exists():
            with manifest.path.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
            manifest.pairs = [
                (manifest.split_dir / r["image"], manifest.split_dir / r["mask"]) for r in rows
            ]
            return manifest

        images_dir = manifest.split_dir / "images"
        masks_dir = manifest.split_dir / "masks"
        if not images_dir.is_dir():
            raise DatasetError(images_dir, "split directory has no images/ and no manifest")
        masks = {p.stem: p for p in masks_dir.glob("*") if p.is_file()}
        for image in sorted(p for p in images_dir.glob("*") if p.is_file()):
            if image.stem not in masks:
                raise DatasetError(image, "no mask with the same id")
            manifest.pairs.append((image, masks[image.stem]))
        return manifest
