"""
Синтетические «аэроснимки»: фон из низкочастотного шума с текстурой и
1–8 зданий (прямоугольники и L-образные), часть вплотную друг к другу,
часть крошечные (сторона < 8 px). Маска рисуется одновременно с картинкой.

Каждый пример детерминирован по (seed, stream, index): свой генератор
np.random.default_rng([seed, stream, index]).
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from ..schemas import SynthParams
from .sample import SegSample

logger = logging.getLogger("winlin.data.synth")

MAX_ATTEMPTS = 20
Box = tuple[int, int, int, int]


def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    pos = np.linspace(0.0, n_in - 1, n_out)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = pos - i0
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), i0] += 1.0 - frac
    m[np.arange(n_out), i1] += frac
    return m


def _background(rng: np.random.Generator, size: int, noise_scale: int) -> np.ndarray:
    grid = -(-size // noise_scale) + 1
    coarse = rng.random((3, grid, grid))
    interp = _interp_matrix(size, grid)
    low = np.einsum("oh,chw,pw->cop", interp, coarse, interp)
    tint = rng.uniform(0.15, 0.35, size=(3, 1, 1))
    return tint + 0.25 * low + 0.03 * rng.standard_normal((3, size, size))


def _footprint(
    rng: np.random.Generator, size: int, params: SynthParams, previous: Optional[Box]
) -> tuple[np.ndarray, Box]:
    tiny = rng.random() < params.tiny_prob
    if tiny:
        h, w = (int(v) for v in rng.integers(2, 8, size=2))
    else:
        lo = max(4, size // 10)
        hi = max(lo + 1, size // 3)
        h, w = (int(v) for v in rng.integers(lo, hi + 1, size=2))
    h, w = min(h, size - 1), min(w, size - 1)

    if previous is not None and rng.random() < params.adjacent_prob:
        py, px, ph, pw = previous
        if rng.random() < 0.5:
            y, x = py, px + pw
        else:
            y, x = py + ph, px
        y, x = min(y, size - h), min(x, size - w)
    else:
        y = int(rng.integers(0, size - h + 1))
        x = int(rng.integers(0, size - w + 1))

    fp = np.zeros((size, size), dtype=bool)
    fp[y : y + h, x : x + w] = True
    if not tiny and h >= 4 and w >= 4 and rng.random() < params.l_shape_prob:
        ch, cw = h // 2, w // 2
        corner = int(rng.integers(4))
        cy = y if corner < 2 else y + h - ch
        cx = x if corner % 2 == 0 else x + w - cw
        fp[cy : cy + ch, cx : cx + cw] = False
    return fp, (y, x, h, w)


def _render(
    rng: np.random.Generator, size: int, params: SynthParams
) -> tuple[np.ndarray, np.ndarray]:
    image = _background(rng, size, params.noise_scale)
    mask = np.zeros((size, size), dtype=bool)
    previous: Optional[Box] = None
    for _ in range(int(rng.integers(params.min_buildings, params.max_buildings + 1))):
        fp, previous = _footprint(rng, size, params, previous)
        roof = rng.uniform(0.55, 0.9) + rng.uniform(-0.08, 0.08, size=3)
        texture = 0.02 * rng.standard_normal((3, size, size))
        image = np.where(fp[None], roof[:, None, None] + texture, image)
        mask |= fp
    return image, mask


def _fallback(rng: np.random.Generator, size: int, params: SynthParams) -> tuple[np.ndarray, np.ndarray]:
    """Одно здание по центру с площадью в середине допустимого диапазона."""
    image = _background(rng, size, params.noise_scale)
    target = 0.5 * (params.min_fraction + params.max_fraction)
    side = int(np.clip(round(np.sqrt(target) * size), 1, size - 1))
    top = (size - side) // 2
    mask = np.zeros((size, size), dtype=bool)
    mask[top : top + side, top : top + side] = True
    roof = rng.uniform(0.55, 0.9) + rng.uniform(-0.08, 0.08, size=3)
    image = np.where(mask[None], roof[:, None, None], image)
    return image, mask


def synth_sample(
    seed: int, index: int, size: int, params: Optional[SynthParams] = None, stream: int = 0
) -> SegSample:
    params = params or SynthParams()
    rng = np.random.default_rng([seed, stream, index])
    for _ in range(MAX_ATTEMPTS):
        image, mask = _render(rng, size, params)
        fraction = float(mask.mean())
        if params.min_fraction <= fraction <= params.max_fraction:
            break
    else:
        logger.debug("synth fallback | seed=%d | index=%d", seed, index)
        image, mask = _fallback(rng, size, params)

    # квантование до 8 бит: запись в файл и обратное чтение без потерь
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    return SegSample(
        image=pixels.astype(np.float32) / 255.0,
        mask=mask.astype(np.float32)[None],
        id=f"s{stream}_{index:05d}",
    )


def synth_generate(
    seed: int, n: int, size: int, params: Optional[SynthParams] = None, stream: int = 0
) -> list[SegSample]:
    return [synth_sample(seed, i, size, params, stream) for i in range(n)]
