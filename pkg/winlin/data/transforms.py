from __future__ import annotations

from typing import Union

import numpy as np

from ..exceptions import PreconditionError
from .sample import SegSample

Size = Union[int, tuple[int, int]]


def _pair(size: Size) -> tuple[int, int]:
    return (size, size) if isinstance(size, int) else (int(size[0]), int(size[1]))


def pad_to_size(sample: SegSample, size: Size) -> SegSample:
    """Нулевое дополнение справа и снизу до size; valid отмечает исходную область."""
    th, tw = _pair(size)
    h, w = sample.height, sample.width
    if th < h or tw < w:
        raise PreconditionError(f"pad target {th}x{tw} is smaller than sample {h}x{w}")
    if (th, tw) == (h, w):
        return sample
    pad = ((0, 0), (0, th - h), (0, tw - w))
    return sample.replace(
        image=np.pad(sample.image, pad),
        mask=np.pad(sample.mask, pad),
        valid=np.pad(sample.valid, pad),
    )


def pad_to_multiple(sample: SegSample, m: int = 32) -> SegSample:
    if m < 1:
        raise PreconditionError(f"pad multiple must be >= 1, got {m}")
    h, w = sample.height, sample.width
    return pad_to_size(sample, (-(-h // m) * m, -(-w // m) * m))


def random_crop(sample: SegSample, size: Size, rng: np.random.Generator) -> SegSample:
    ch, cw = _pair(size)
    h, w = sample.height, sample.width
    if ch > h or cw > w or ch < 1 or cw < 1:
        raise PreconditionError(f"crop {ch}x{cw} does not fit sample {h}x{w}")
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    window = (slice(None), slice(top, top + ch), slice(left, left + cw))
    return sample.replace(
        image=sample.image[window].copy(),
        mask=sample.mask[window].copy(),
        valid=sample.valid[window].copy(),
    )


def flip_augment(sample: SegSample, rng: np.random.Generator, p: float = 0.5) -> SegSample:
    # оба броска делаются всегда, чтобы поток rng не зависел от исхода
    hflip = rng.random() < p
    vflip = rng.random() < p
    arrays = [sample.image, sample.mask, sample.valid]
    if hflip:
        arrays = [a[:, :, ::-1] for a in arrays]
    if vflip:
        arrays = [a[:, ::-1, :] for a in arrays]
    if not (hflip or vflip):
        return sample
    image, mask, valid = (np.ascontiguousarray(a) for a in arrays)
    return sample.replace(image=image, mask=mask, valid=valid)


def stack_batch(samples: list[SegSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Склеивает примеры одного размера в батч [B,3,H,W], [B,1,H,W], [B,1,H,W]."""
    shapes = {s.image.shape for s in samples}
    if len(shapes) != 1:
        raise PreconditionError(f"batch samples differ in shape: {sorted(shapes)}")
    return (
        np.stack([s.image for s in samples]).astype(np.float32),
        np.stack([s.mask for s in samples]).astype(np.float32),
        np.stack([s.valid for s in samples]).astype(np.float32),
    )
