"""Чтение и запись изображений (PPM/PGM/PNG) через Pillow."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..exceptions import DatasetError

MASK_THRESHOLD = 127


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_image(path: Path, image: np.ndarray) -> Path:
    """image: [3,H,W] в [0,1]. Формат берётся из расширения (.ppm, .png)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(_to_uint8(np.transpose(image, (1, 2, 0))))).save(path)
    return path


def write_mask(path: Path, mask: np.ndarray) -> Path:
    """mask: [1,H,W] или [H,W] в {0,1}; пишется как 0/255 (.pgm, .png)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    plane = mask.reshape(mask.shape[-2:])
    Image.fromarray(np.where(plane > 0.5, 255, 0).astype(np.uint8)).save(path)
    return path


def _open(path: Path, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert(mode))
    except (OSError, UnidentifiedImageError) as e:
        raise DatasetError(path, f"cannot read image: {e}") from e


def read_image(path: Path) -> np.ndarray:
    rgb = _open(path, "RGB")
    return np.transpose(rgb, (2, 0, 1)).astype(np.float32) / 255.0


def read_mask(path: Path) -> np.ndarray:
    gray = _open(path, "L")
    return (gray > MASK_THRESHOLD).astype(np.float32)[None]
