from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..data import SegSample, pad_to_multiple, read_image, write_mask
from ..exceptions import DatasetError
from .inference import Predictor, predict_probs, tta_predict
from .timing import timed

logger = logging.getLogger("winlin.services.prediction")

IMAGE_SUFFIXES = {".ppm", ".png", ".pnm"}


def predict_image(
    model: Predictor, image: np.ndarray, use_tta: bool = True, pad_multiple: int = 32
) -> np.ndarray:
    """Маска [1,H,W] в {0,1} для изображения [3,H,W] исходного размера."""
    h, w = image.shape[1:]
    sample = pad_to_multiple(
        SegSample(image=image, mask=np.zeros((1, h, w), dtype=np.float32)), pad_multiple
    )
    batch = sample.image[None]
    probs = tta_predict(model, batch) if use_tta else predict_probs(model, batch)
    return (probs[0, :, :h, :w] > 0.5).astype(np.float32)


def predict_directory(
    model: Predictor,
    in_dir: Path | str,
    out_dir: Path | str,
    use_tta: bool = True,
    pad_multiple: int = 32,
) -> list[Path]:
    """Пишет <id>.pgm (255 = здание) для каждого изображения каталога."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    if not in_dir.is_dir():
        raise DatasetError(in_dir, "input directory does not exist")
    images = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if hasattr(model, "eval"):
        model.eval()
    written = []
    with timed("predict", logger, images=len(images), tta=use_tta):
        for path in images:
            mask = predict_image(model, read_image(path), use_tta, pad_multiple)
            written.append(write_mask(out_dir / f"{path.stem}.pgm", mask))
            logger.debug("predict image | id=%s | building_px=%d", path.stem, int(mask.sum()))
    return written
