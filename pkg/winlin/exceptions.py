from __future__ import annotations

from pathlib import Path


class WinlinError(Exception):
    """Базовое исключение пакета."""


class DimensionError(WinlinError):
    pass


class ConfigurationError(WinlinError):
    pass


class ConfigError(ConfigurationError):
    def __init__(self, key: str, source: str, reason: str):
        self.key = key
        self.source = source
        self.reason = reason
        super().__init__(f"{key} ({source}): {reason}")


class PreconditionError(WinlinError):
    pass


class DegenerateInputError(WinlinError):
    pass


class GradcheckError(WinlinError):
    def __init__(self, index: tuple[int, ...], reason: str):
        self.index = index
        super().__init__(f"element {index}: {reason}")


class NonFiniteGradientError(WinlinError):
    def __init__(self, parameter: str):
        self.parameter = parameter
        super().__init__(f"non-finite gradient in parameter {parameter!r}")


class TrainingDivergedError(WinlinError):
    def __init__(self, epoch: int, step: int, last_good: Path | None):
        self.epoch = epoch
        self.step = step
        self.last_good = last_good
        super().__init__(
            f"loss is not finite at epoch={epoch} step={step}; "
            f"last good checkpoint: {last_good}"
        )


class CheckpointError(WinlinError):
    pass


class CheckpointMismatchError(CheckpointError):
    def __init__(self, field: str, expected: object, found: object):
        self.field = field
        super().__init__(
            f"checkpoint config mismatch on {field}: expected {expected!r}, found {found!r}"
        )


class DatasetError(WinlinError):
    def __init__(self, path: Path | str, reason: str):
        self.path = Path(path)
        super().__init__(f"{path}: {reason}")
