from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional

from pydantic import ValidationError

from ..config import settings
from ..exceptions import ConfigError
from ..schemas import RunConfig

logger = logging.getLogger("winlin.services.run_config")

EFFECTIVE_CONFIG_NAME = "effective_config.txt"


def _decode(raw: str) -> Any:
    """JSON, если разбирается (числа, bool, списки), иначе строка как есть."""
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _parse_line(line: str, source: str) -> Optional[tuple[str, str]]:
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    key, sep, value = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(key or text, source, "expected key=value")
    if "." not in key:
        raise ConfigError(key, source, "keys are namespaced as section.field")
    return key, value


def _insert(tree: dict, key: str, value: Any, source: str) -> None:
    *parents, leaf = key.split(".")
    node = tree
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(key, source, f"{part!r} is a value, not a section")
        node = child
    node[leaf] = value


def _source_for(loc: tuple, sources: dict[str, str]) -> tuple[str, str]:
    dotted = ".".join(str(p) for p in loc if not isinstance(p, int))
    if dotted in sources:
        return dotted, sources[dotted]
    for key, source in sources.items():
        if key.startswith(dotted + ".") or dotted.startswith(key + "."):
            return key, source
    return dotted or "<root>", "defaults"


def parse_config(path: Optional[Path | str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    defaults <- файл <- overrides. Любая ошибка разбора или валидации
    поднимается как ConfigError с ключом и источником (строка файла или override).
    """
    entries: dict[str, tuple[Any, str]] = {}
    if path is not None:
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise ConfigError("<file>", str(path), f"cannot read config: {e}") from e
        for lineno, line in enumerate(lines, start=1):
            parsed = _parse_line(line, f"{path}:{lineno}")
            if parsed:
                entries[parsed[0]] = (_decode(parsed[1]), f"{path}:{lineno}")
    for item in overrides:
        parsed = _parse_line(item, "override")
        if parsed:
            entries[parsed[0]] = (_decode(parsed[1]), "override")

    tree: dict = {}
    for key, (value, source) in entries.items():
        _insert(tree, key, value, source)

    try:
        config = RunConfig.model_validate(tree)
    except ValidationError as e:
        err = e.errors()[0]
        key, source = _source_for(tuple(err["loc"]), {k: s for k, (_, s) in entries.items()})
        raise ConfigError(key, source, err["msg"]) from e

    logger.debug("config parsed | path=%s | keys=%d", path, len(entries))
    return config


def resolve_seed(config: RunConfig) -> int:
    for candidate in (config.run.seed, config.train.seed, settings.seed):
        if candidate is not None:
            return int(candidate)
    return 0


def _flatten(prefix: str, value: Any, out: dict[str, Any]) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, out)
    else:
        out[prefix] = value


def effective_config_text(config: RunConfig) -> str:
    flat: dict[str, Any] = {}
    _flatten("", config.model_dump(mode="json"), flat)
    flat["run.seed"] = resolve_seed(config)
    return "".join(f"{k}={json.dumps(flat[k])}\n" for k in sorted(flat))


def write_effective_config(config: RunConfig, out_dir: Path | str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / EFFECTIVE_CONFIG_NAME
    path.write_text(effective_config_text(config), encoding="utf-8")
    return path
