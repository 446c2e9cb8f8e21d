from __future__ import annotations

import logging
from typing import Any, Optional, Sequence, Union

import numpy as np

from ..config import settings
from ..exceptions import DimensionError

logger = logging.getLogger("winlin.tensor")

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]


class Function:
    """
    Базовый класс дифференцируемой операции.

    forward() получает numpy-массивы входов и возвращает массив результата.
    backward() получает dL/d(out) и возвращает кортеж dL/d(input) по каждому входу
    (None, если градиент по входу не нужен).
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.saved: tuple[Any, ...] = ()

    def save_for_backward(self, *values: Any) -> None:
        self.saved = values

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__}.forward")

    def backward(self, grad: np.ndarray) -> tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__}.backward")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        if settings.debug:
            _assert_finite(cls.__name__, inputs, out)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, _ctx=fn if requires_grad else None)


def _assert_finite(op: str, inputs: Sequence["Tensor"], out: np.ndarray) -> None:
    if all(np.isfinite(t.data).all() for t in inputs) and not np.isfinite(out).all():
        raise FloatingPointError(f"{op} produced non-finite output from finite inputs")


class Tensor:
    """
    Плотный массив (float32/float64) с необязательным слотом градиента.
    Граф вычислений строится через Function.apply, обратный проход через backward().
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Any = None,
        _ctx: Optional[Function] = None,
    ):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._ctx = _ctx

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Обратный проход от этого тензора.
        Градиенты накапливаются только в листьях с requires_grad=True.
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.size != 1:
                raise DimensionError(
                    f"backward() without grad needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)

        order = self._topological_order()
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._ctx is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for inp, ig in zip(node._ctx.inputs, node._ctx.backward(g)):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                grads[key] = ig if key not in grads else grads[key] + ig

    def _topological_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for inp in reversed(node._ctx.inputs):
                    if inp.requires_grad and id(inp) not in visited:
                        stack.append((inp, False))
        return order

    # арифметика: тонкие обёртки над functional
    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F

        return F.add(self, F.neg(other) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other: float) -> "Tensor":
        from . import functional as F

        return F.add(F.neg(self), other)

    def __neg__(self) -> "Tensor":
        from . import functional as F

        return F.neg(self)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F

        if isinstance(other, Tensor):
            return F.div(self, other)
        return F.mul(self, 1.0 / other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import functional as F

        return F.matmul(self, other)

    def sum(self) -> "Tensor":
        from . import functional as F

        return F.sum_all(self)

    def reshape(self, *shape: int) -> "Tensor":
        from . import functional as F

        return F.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from . import functional as F

        return F.transpose(self, axes)


class Parameter(Tensor):
    """Обучаемый тензор; name: стабильный путь, ключ чекпоинта."""

    def __init__(self, data: ArrayLike, name: str = "", dtype: Any = None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, dtype={self.dtype})"
