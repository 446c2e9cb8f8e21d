"""
Формат чекпоинта (все числа little-endian):

    b"BFCK"                 магия
    u32                     версия формата
    u32                     длина заголовка в байтах
    utf-8                   заголовок, строки key=value:
                              epoch=<int>, seed=<int>, optim.step=<int> (если есть),
                              model.<поле>=<json>, tensors=<int>
    далее tensors блоков:
    u16 + utf-8             имя тензора
    u8                      число осей
    u32 × ndim              размеры
    float32 × prod(dims)    данные

Параметры и буферы BN хранятся под своими именами из Module.named_parameters();
моменты AdamW хранятся под именами optim.m/<имя> и optim.v/<имя>.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from ..exceptions import CheckpointError, CheckpointMismatchError
from ..schemas import ModelConfig
from .buildformer import BuildFormer
from .module import Module

logger = logging.getLogger("winlin.models.checkpoint")

MAGIC = b"BFCK"
FORMAT_VERSION = 1
_M_PREFIX = "optim.m/"
_V_PREFIX = "optim.v/"


@dataclass
class OptimizerState:
    step: int
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class Checkpoint:
    config: ModelConfig
    state: dict[str, np.ndarray]
    epoch: int = 0
    seed: int = 0
    optimizer: Optional[OptimizerState] = None
    version: int = FORMAT_VERSION


def _header(ckpt: Checkpoint, n_tensors: int) -> bytes:
    lines = [f"epoch={ckpt.epoch}", f"seed={ckpt.seed}"]
    if ckpt.optimizer is not None:
        lines.append(f"optim.step={ckpt.optimizer.step}")
    for key, value in ckpt.config.model_dump().items():
        lines.append(f"model.{key}={json.dumps(value)}")
    lines.append(f"tensors={n_tensors}")
    return "\n".join(lines).encode("utf-8")


def _tensor_block(name: str, array: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    arr = np.ascontiguousarray(array, dtype="<f4")
    parts = [
        struct.pack("<H", len(raw_name)),
        raw_name,
        struct.pack("<B", arr.ndim),
        struct.pack(f"<{arr.ndim}I", *arr.shape),
        arr.tobytes(),
    ]
    return b"".join(parts)


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    tensors: dict[str, np.ndarray] = dict(ckpt.state)
    if ckpt.optimizer is not None:
        tensors.update({_M_PREFIX + k: v for k, v in ckpt.optimizer.m.items()})
        tensors.update({_V_PREFIX + k: v for k, v in ckpt.optimizer.v.items()})

    header = _header(ckpt, len(tensors))
    payload = [MAGIC, struct.pack("<II", ckpt.version, len(header)), header]
    payload.extend(_tensor_block(name, arr) for name, arr in tensors.items())

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(payload))
    tmp.replace(path)
    logger.info("checkpoint saved | path=%s | epoch=%d | tensors=%d", path, ckpt.epoch, len(tensors))
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _parse_header(text: str, path: Path) -> tuple[dict[str, str], dict[str, object]]:
    meta: dict[str, str] = {}
    model: dict[str, object] = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"{path}: malformed header line {line!r}")
        if key.startswith("model."):
            model[key[len("model.") :]] = json.loads(value)
        else:
            meta[key] = value
    return meta, model


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except OSError as e:
        raise CheckpointError(f"{path}: {e}") from e

    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version, header_len = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    meta, model_fields = _parse_header(reader.take(header_len).decode("utf-8"), path)

    try:
        config = ModelConfig(**model_fields)
    except ValidationError as e:
        raise CheckpointError(f"{path}: invalid model config in header: {e}") from e

    tensors: dict[str, np.ndarray] = {}
    for _ in range(int(meta.get("tensors", 0))):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape).copy()

    optimizer = None
    if "optim.step" in meta:
        optimizer = OptimizerState(
            step=int(meta["optim.step"]),
            m={k[len(_M_PREFIX) :]: v for k, v in tensors.items() if k.startswith(_M_PREFIX)},
            v={k[len(_V_PREFIX) :]: v for k, v in tensors.items() if k.startswith(_V_PREFIX)},
        )
    state = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
    return Checkpoint(
        config=config,
        state=state,
        epoch=int(meta.get("epoch", 0)),
        seed=int(meta.get("seed", 0)),
        optimizer=optimizer,
        version=version,
    )


def check_config(found: ModelConfig, expected: ModelConfig) -> None:
    """Бросает CheckpointMismatchError с именем первого различающегося поля."""
    exp, got = expected.model_dump(), found.model_dump()
    for name in exp:
        if exp[name] != got.get(name):
            raise CheckpointMismatchError(name, exp[name], got.get(name))


def snapshot(model: BuildFormer, epoch: int = 0, seed: int = 0, optimizer=None) -> Checkpoint:
    state = {name: arr.copy() for name, arr in model.state_dict().items()}
    return Checkpoint(
        config=model.config,
        state=state,
        epoch=epoch,
        seed=seed,
        optimizer=optimizer.export_state() if optimizer is not None else None,
    )


def restore_model(ckpt: Checkpoint, expected: Optional[ModelConfig] = None) -> BuildFormer:
    if expected is not None:
        check_config(ckpt.config, expected)
    model = BuildFormer(ckpt.config, seed=ckpt.seed)
    load_into(model, ckpt)
    return model


def load_into(model: Module, ckpt: Checkpoint) -> None:
    config = getattr(model, "config", None)
    if isinstance(config, ModelConfig):
        check_config(ckpt.config, config)
    model.load_state_dict(ckpt.state)
