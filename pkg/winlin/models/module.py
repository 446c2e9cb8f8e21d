from __future__ import annotations

from typing import Any, Iterator

import numpy as np

from ..exceptions import CheckpointError
from ..tensor import Parameter, Tensor


class Module:
    """
    Минимальный контейнер слоёв: параметры, буферы (running-статистики BN),
    режимы train/eval. Дочерние модули и списки модулей обходятся в порядке
    объявления атрибутов, поэтому имена параметров стабильны.
    """

    def __init__(self) -> None:
        self.training = True
        self._buffers: dict[str, np.ndarray] = {}

    def forward(self, *args: Any, **kwargs: Any) -> Tensor:
        raise NotImplementedError(f"{type(self).__name__}.forward")

    def __call__(self, *args: Any, **kwargs: Any) -> Tensor:
        return self.forward(*args, **kwargs)

    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.named_children():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype: Any) -> "Module":
        dtype = np.dtype(dtype)
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for m in self.modules():
            for key in list(m._buffers):
                m._buffers[key] = m._buffers[key].astype(dtype)
        return self

    def assign_names(self) -> None:
        for name, p in self.named_parameters():
            p.name = name

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        buffers = {name: (m, key) for m, name, key in self._buffer_slots()}
        missing = (set(own) | set(buffers)) - set(state)
        unexpected = set(state) - set(own) - set(buffers)
        if missing or unexpected:
            raise CheckpointError(
                f"state mismatch: missing={sorted(missing)[:5]} unexpected={sorted(unexpected)[:5]}"
            )
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise CheckpointError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype).copy()
        for name, (m, key) in buffers.items():
            m._buffers[key] = np.asarray(state[name]).astype(m._buffers[key].dtype).copy()

    def _buffer_slots(self, prefix: str = "") -> Iterator[tuple["Module", str, str]]:
        for key in self._buffers:
            yield self, prefix + key, key
        for name, child in self.named_children():
            yield from child._buffer_slots(f"{prefix}{name}.")


def count_parameters(model: Module) -> int:
    return sum(p.size for p in model.parameters())
