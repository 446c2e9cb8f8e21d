from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..data import SegSample, flip_augment, pad_to_multiple, pad_to_size, random_crop, stack_batch
from ..exceptions import PreconditionError, TrainingDivergedError
from ..models import BuildFormer, load_checkpoint, load_into, save_checkpoint, snapshot
from ..schemas import MetricReport, TrainConfig
from ..tensor import Tensor
from .evaluation_service import evaluate
from .losses import joint_loss
from .optim import AdamW, clip_grad_norm, cosine_lr
from .timing import timed

logger = logging.getLogger("winlin.services.training")

LOG_COLUMNS = ["epoch", "step", "lr", "loss_total", "loss_ce", "loss_dice", "loss_boundary"]
LOG_NAME = "train_log.csv"


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    epoch_losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    evals: dict[int, MetricReport] = field(default_factory=dict)


def _fmt(x: float) -> str:
    return repr(float(x))


def _prepare(
    samples: list[SegSample],
    config: TrainConfig,
    rng: np.random.Generator,
    pad_multiple: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    prepared = []
    for sample in samples:
        sample = pad_to_multiple(sample, pad_multiple)
        if config.crop_size is not None:
            sample = pad_to_multiple(random_crop(sample, config.crop_size, rng), pad_multiple)
        prepared.append(flip_augment(sample, rng, config.flip_p))
    height = max(s.height for s in prepared)
    width = max(s.width for s in prepared)
    return stack_batch([pad_to_size(s, (height, width)) for s in prepared])


def train(
    model: BuildFormer,
    samples: Sequence[SegSample],
    config: TrainConfig,
    out_dir: Path | str,
    *,
    seed: int = 0,
    pad_multiple: int = 32,
    init_checkpoint: Optional[Path | str] = None,
    val_samples: Optional[Sequence[SegSample]] = None,
) -> TrainResult:
    """
    Шаг обучения: батч -> pad/crop/flip -> forward -> joint_loss -> backward
    -> AdamW с косинусным lr. Порядок примеров и аугментации задаются
    генератором np.random.default_rng([seed, epoch]), поэтому прогон
    с тем же seed повторяется побитово.
    """
    if not samples:
        raise PreconditionError("training set is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = list(samples)

    if init_checkpoint is not None:
        load_into(model, load_checkpoint(init_checkpoint))
        logger.info("fine-tune from checkpoint | path=%s", init_checkpoint)

    optimizer = AdamW(
        model.named_parameters(),
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    steps_per_epoch = math.ceil(len(samples) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    log_path = out_dir / LOG_NAME
    result = TrainResult(checkpoint_path=out_dir / "final.bfck", log_path=log_path)
    last_good: Optional[Path] = None
    step = 0

    with timed("train", logger, samples=len(samples), epochs=config.epochs, seed=seed):
        with log_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for epoch in range(1, config.epochs + 1):
                rng = np.random.default_rng([seed, epoch])
                order = rng.permutation(len(samples))
                model.train()
                losses = []
                for b in range(steps_per_epoch):
                    picked = order[b * config.batch_size : (b + 1) * config.batch_size]
                    images, masks, valid = _prepare(
                        [samples[i] for i in picked], config, rng, pad_multiple
                    )

                    lr = cosine_lr(step, total_steps, config.base_lr, config.min_lr)
                    loss, parts = joint_loss(model(Tensor(images)), masks, valid)
                    if not np.isfinite(parts.total):
                        logger.error(
                            "loss diverged | epoch=%d | step=%d | last_good=%s",
                            epoch,
                            step,
                            last_good,
                        )
                        raise TrainingDivergedError(epoch, step, last_good)

                    model.zero_grad()
                    loss.backward()
                    if config.grad_clip > 0:
                        clip_grad_norm(model.parameters(), config.grad_clip)
                    optimizer.step(lr)

                    writer.writerow(
                        [
                            epoch,
                            step,
                            _fmt(lr),
                            _fmt(parts.total),
                            _fmt(parts.ce),
                            _fmt(parts.dice),
                            _fmt(parts.boundary),
                        ]
                    )
                    logger.debug(
                        "train step | epoch=%d | step=%d | lr=%.3e | loss=%.5f",
                        epoch,
                        step,
                        lr,
                        parts.total,
                    )
                    result.lrs.append(lr)
                    losses.append(parts.total)
                    step += 1
                fh.flush()

                mean_loss = float(np.mean(losses))
                result.epoch_losses.append(mean_loss)
                logger.info("train epoch | epoch=%d | mean_loss=%.5f", epoch, mean_loss)

                if epoch % config.eval_every == 0 or epoch == config.epochs:
                    name = "final.bfck" if epoch == config.epochs else f"epoch_{epoch:04d}.bfck"
                    last_good = save_checkpoint(
                        snapshot(model, epoch=epoch, seed=seed, optimizer=optimizer),
                        out_dir / name,
                    )
                    if val_samples:
                        report = evaluate(
                            model, val_samples, use_tta=False, pad_multiple=pad_multiple
                        )
                        result.evals[epoch] = report
                        logger.info(
                            "train eval | epoch=%d | iou=%.4f | f1=%.4f",
                            epoch,
                            report.iou,
                            report.f1,
                        )

    model.eval()
    return result
