"""
Дифференцируемые операции над Tensor.

Каждая операция: подкласс Function с аналитическим backward.
Широковещание не поддерживается, кроме bias в свёртке и покомпонентной
аффинной части batchnorm: формы входов сверяются явно.
"""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ConfigurationError, DimensionError, PreconditionError
from .tensor import Function, Tensor

Scalar = Union[float, int]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------- elementwise


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray):
        return grad, grad


class AddScalar(Function):
    def forward(self, a: np.ndarray, *, value: float) -> np.ndarray:
        return a + a.dtype.type(value)

    def backward(self, grad: np.ndarray):
        return (grad,)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.save_for_backward(a, b)
        return a * b

    def backward(self, grad: np.ndarray):
        a, b = self.saved
        return grad * b, grad * a


class MulScalar(Function):
    def forward(self, a: np.ndarray, *, value: float) -> np.ndarray:
        self.save_for_backward(a.dtype.type(value))
        return a * self.saved[0]

    def backward(self, grad: np.ndarray):
        return (grad * self.saved[0],)


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.save_for_backward(a, b)
        return a / b

    def backward(self, grad: np.ndarray):
        a, b = self.saved
        return grad / b, -grad * a / (b * b)


class SumAll(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.save_for_backward(a.shape, a.dtype)
        return np.asarray(a.sum(), dtype=a.dtype)

    def backward(self, grad: np.ndarray):
        shape, dtype = self.saved
        return (np.full(shape, grad, dtype=dtype),)


def add(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if isinstance(b, Tensor):
        _require_same_shape("add", a, b)
        return Add.apply(a, b)
    return AddScalar.apply(a, value=float(b))


def neg(a: Tensor) -> Tensor:
    return MulScalar.apply(a, value=-1.0)


def mul(a: Tensor, b: Union[Tensor, Scalar]) -> Tensor:
    if isinstance(b, Tensor):
        _require_same_shape("mul", a, b)
        return Mul.apply(a, b)
    return MulScalar.apply(a, value=float(b))


def div(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("div", a, b)
    return Div.apply(a, b)


def sum_all(a: Tensor) -> Tensor:
    return SumAll.apply(a)


# ---------------------------------------------------------------- shape


class Reshape(Function):
    def forward(self, a: np.ndarray, *, shape: tuple[int, ...]) -> np.ndarray:
        self.save_for_backward(a.shape)
        return a.reshape(shape)

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.saved[0]),)


class Transpose(Function):
    def forward(self, a: np.ndarray, *, axes: tuple[int, ...]) -> np.ndarray:
        self.save_for_backward(np.argsort(axes))
        return np.ascontiguousarray(a.transpose(axes))

    def backward(self, grad: np.ndarray):
        return (np.ascontiguousarray(grad.transpose(self.saved[0])),)


class Pad2d(Function):
    """Нулевое дополнение двух последних осей справа и снизу."""

    def forward(self, a: np.ndarray, *, pad_h: int, pad_w: int) -> np.ndarray:
        self.save_for_backward(a.shape[-2], a.shape[-1])
        widths = [(0, 0)] * (a.ndim - 2) + [(0, pad_h), (0, pad_w)]
        return np.pad(a, widths)

    def backward(self, grad: np.ndarray):
        h, w = self.saved
        return (np.ascontiguousarray(grad[..., :h, :w]),)


class Crop2d(Function):
    def forward(self, a: np.ndarray, *, height: int, width: int) -> np.ndarray:
        self.save_for_backward(a.shape)
        return np.ascontiguousarray(a[..., :height, :width])

    def backward(self, grad: np.ndarray):
        (shape,) = self.saved
        out = np.zeros(shape, dtype=grad.dtype)
        out[..., : grad.shape[-2], : grad.shape[-1]] = grad
        return (out,)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        self.save_for_backward(axis, [a.shape[axis] for a in arrays])
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray):
        axis, sizes = self.saved
        bounds = np.cumsum(sizes)[:-1]
        return tuple(np.ascontiguousarray(g) for g in np.split(grad, bounds, axis=axis))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape) or int(np.prod(shape)) != a.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    return Reshape.apply(a, shape=shape)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose: axes {axes} invalid for shape {a.shape}")
    return Transpose.apply(a, axes=axes)


def pad2d(a: Tensor, pad_h: int, pad_w: int) -> Tensor:
    if pad_h == 0 and pad_w == 0:
        return a
    return Pad2d.apply(a, pad_h=pad_h, pad_w=pad_w)


def crop2d(a: Tensor, height: int, width: int) -> Tensor:
    if a.shape[-2:] == (height, width):
        return a
    if height > a.shape[-2] or width > a.shape[-1]:
        raise DimensionError(f"crop2d: {height}x{width} exceeds {a.shape}")
    return Crop2d.apply(a, height=height, width=width)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    ref = tensors[0].shape
    for t in tensors[1:]:
        other = t.shape
        if len(other) != len(ref) or any(
            x != y for i, (x, y) in enumerate(zip(ref, other)) if i != axis
        ):
            raise DimensionError(f"concat: shape mismatch {ref} vs {other} on axis {axis}")
    return Concat.apply(*tensors, axis=axis)


# ---------------------------------------------------------------- linear algebra


class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.save_for_backward(a, b)
        return a @ b

    def backward(self, grad: np.ndarray):
        a, b = self.saved
        ga = grad @ np.swapaxes(b, -1, -2)
        if b.ndim == 2 and a.ndim > 2:
            gb = a.reshape(-1, a.shape[-1]).T @ grad.reshape(-1, grad.shape[-1])
        else:
            gb = np.swapaxes(a, -1, -2) @ grad
        return ga, gb


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    a[..., m, k] @ b[..., k, n]: ведущие оси совпадают, либо b это общая матрица [k, n].
    """
    ok = a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2]
    if ok and b.ndim > 2:
        ok = a.shape[:-2] == b.shape[:-2]
    if not ok:
        raise DimensionError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    return MatMul.apply(a, b)


# ---------------------------------------------------------------- convolution


class Conv2d(Function):
    """Кросс-корреляция (без переворота ядра), нулевой padding, группы."""

    def forward(
        self,
        x: np.ndarray,
        w: np.ndarray,
        *bias: np.ndarray,
        stride: int,
        padding: int,
        groups: int,
    ) -> np.ndarray:
        batch, channels, height, width = x.shape
        out_ch, ch_per_group, kh, kw = w.shape
        p = padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        oh, ow = win.shape[2], win.shape[3]
        if groups == 1:
            out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        else:
            out = np.einsum(
                "bgchwij,gocij->bgohw",
                win.reshape(batch, groups, ch_per_group, oh, ow, kh, kw),
                w.reshape(groups, out_ch // groups, ch_per_group, kh, kw),
            ).reshape(batch, out_ch, oh, ow)
        if bias:
            out = out + bias[0].reshape(1, -1, 1, 1)
        self.save_for_backward(x.shape, xp.shape, win, w, stride, padding, groups)
        return np.ascontiguousarray(out)

    def backward(self, grad: np.ndarray):
        x_shape, xp_shape, win, w, stride, p, groups = self.saved
        batch, channels, height, width = x_shape
        out_ch, ch_per_group, kh, kw = w.shape
        oh, ow = grad.shape[2], grad.shape[3]
        x_t, w_t = self.inputs[0], self.inputs[1]

        if groups == 1:
            gw = np.tensordot(grad, win, axes=([0, 2, 3], [0, 2, 3]))
        else:
            gg = grad.reshape(batch, groups, out_ch // groups, oh, ow)
            gw = np.einsum(
                "bgohw,bgchwij->gocij",
                gg,
                win.reshape(batch, groups, ch_per_group, oh, ow, kh, kw),
            ).reshape(w.shape)

        gx = None
        if x_t.requires_grad:
            if groups == 1:
                gwin = np.tensordot(grad, w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
            else:
                gwin = np.einsum(
                    "bgohw,gocij->bgchwij",
                    grad.reshape(batch, groups, out_ch // groups, oh, ow),
                    w.reshape(groups, out_ch // groups, ch_per_group, kh, kw),
                ).reshape(batch, channels, oh, ow, kh, kw)
            gxp = np.zeros(xp_shape, dtype=grad.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[
                        :,
                        :,
                        i : i + stride * (oh - 1) + 1 : stride,
                        j : j + stride * (ow - 1) + 1 : stride,
                    ] += gwin[..., i, j]
            gx = np.ascontiguousarray(gxp[:, :, p : p + height, p : p + width])

        grads = [gx, gw if w_t.requires_grad else None]
        if len(self.inputs) == 3:
            grads.append(grad.sum(axis=(0, 2, 3)))
        return tuple(grads)


def conv2d(
    x: Tensor,
    w: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input and kernel, got {x.shape}, {w.shape}")
    channels = x.shape[1]
    out_ch = w.shape[0]
    if groups < 1 or channels % groups or out_ch % groups:
        raise ConfigurationError(
            f"conv2d: channels {channels} and outputs {out_ch} must be divisible by groups={groups}"
        )
    if w.shape[1] != channels // groups:
        raise DimensionError(
            f"conv2d: kernel {w.shape} does not match input {x.shape} with groups={groups}"
        )
    if bias is not None and bias.shape != (out_ch,):
        raise DimensionError(f"conv2d: bias {bias.shape} does not match kernel {w.shape}")
    kh, kw = w.shape[2], w.shape[3]
    oh = (x.shape[2] + 2 * padding - kh) // stride + 1
    ow = (x.shape[3] + 2 * padding - kw) // stride + 1
    if stride < 1 or oh < 1 or ow < 1:
        raise PreconditionError(
            f"conv2d: input {x.shape} too small for kernel {kh}x{kw}, stride {stride}, pad {padding}"
        )
    inputs = (x, w) if bias is None else (x, w, bias)
    return Conv2d.apply(*inputs, stride=stride, padding=padding, groups=groups)


# ---------------------------------------------------------------- normalization


class BatchNorm2d(Function):
    def forward(
        self,
        x: np.ndarray,
        gamma: np.ndarray,
        beta: np.ndarray,
        *,
        running_mean: np.ndarray,
        running_var: np.ndarray,
        training: bool,
        eps: float,
        momentum: float,
    ) -> np.ndarray:
        n = x.size // x.shape[1]
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            unbiased = var * (n / (n - 1)) if n > 1 else var
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean.astype(running_mean.dtype)
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased.astype(running_var.dtype)
        else:
            mean, var = running_mean, running_var
        inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        xhat = (x - mean.astype(x.dtype).reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
        self.save_for_backward(xhat, inv_std, gamma, training, n)
        return xhat * gamma.reshape(1, -1, 1, 1) + beta.reshape(1, -1, 1, 1)

    def backward(self, grad: np.ndarray):
        xhat, inv_std, gamma, training, n = self.saved
        axes = (0, 2, 3)
        gbeta = grad.sum(axis=axes)
        ggamma = (grad * xhat).sum(axis=axes)
        dxhat = grad * gamma.reshape(1, -1, 1, 1)
        if training:
            gx = (inv_std.reshape(1, -1, 1, 1) / n) * (
                n * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            gx = dxhat * inv_std.reshape(1, -1, 1, 1)
        return gx, ggamma, gbeta


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
) -> Tensor:
    """
    В режиме обучения нормирует по (B, H, W) и обновляет running_mean/var на месте.
    """
    if x.ndim != 4:
        raise DimensionError(f"batchnorm2d: expected 4-D input, got {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"batchnorm2d: affine {gamma.shape}/{beta.shape} does not match input {x.shape}"
        )
    if eps <= 0:
        raise PreconditionError(f"batchnorm2d: eps must be positive, got {eps}")
    return BatchNorm2d.apply(
        x,
        gamma,
        beta,
        running_mean=running_mean,
        running_var=running_var,
        training=training,
        eps=eps,
        momentum=momentum,
    )


class L2NormalizeRows(Function):
    def forward(self, x: np.ndarray, *, eps: float) -> np.ndarray:
        norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
        denom = np.maximum(norm, eps)
        y = x / denom
        self.save_for_backward(y, denom, norm > eps)
        return y

    def backward(self, grad: np.ndarray):
        y, denom, active = self.saved
        proj = (grad * y).sum(axis=-1, keepdims=True)
        return (np.where(active, grad - y * proj, grad) / denom,)


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    if eps <= 0:
        raise PreconditionError(f"l2_normalize_rows: eps must be positive, got {eps}")
    return L2NormalizeRows.apply(x, eps=eps)


class SoftmaxRows(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)
        self.save_for_backward(y)
        return y

    def backward(self, grad: np.ndarray):
        (y,) = self.saved
        return (y * (grad - (grad * y).sum(axis=-1, keepdims=True)),)


def softmax_rows(x: Tensor) -> Tensor:
    return SoftmaxRows.apply(x)


# ---------------------------------------------------------------- activations


class ReLU6(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.save_for_backward((x > 0) & (x < 6))
        return np.clip(x, 0, 6)

    def backward(self, grad: np.ndarray):
        return (grad * self.saved[0],)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        y = stable_sigmoid(x)
        self.save_for_backward(y)
        return y

    def backward(self, grad: np.ndarray):
        (y,) = self.saved
        return (grad * y * (1 - y),)


class AbsClamp01(Function):
    """min(|x|, 1): сила границы из знакового лапласиана."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        ax = np.abs(x)
        self.save_for_backward(np.sign(x) * (ax < 1))
        return np.minimum(ax, 1)

    def backward(self, grad: np.ndarray):
        return (grad * self.saved[0],)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def relu6(x: Tensor) -> Tensor:
    return ReLU6.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def abs_clamp01(x: Tensor) -> Tensor:
    return AbsClamp01.apply(x)


# ---------------------------------------------------------------- resampling


def bilinear_weights(size: int, factor: int, dtype: np.dtype) -> np.ndarray:
    """
    Матрица [size*factor, size] интерполяции с align_corners=False.
    """
    out = size * factor
    src = np.maximum((np.arange(out) + 0.5) / factor - 0.5, 0.0)
    lo = np.minimum(np.floor(src).astype(np.int64), size - 1)
    hi = np.minimum(lo + 1, size - 1)
    lam = src - lo
    m = np.zeros((out, size), dtype=np.float64)
    rows = np.arange(out)
    np.add.at(m, (rows, lo), 1.0 - lam)
    np.add.at(m, (rows, hi), lam)
    return m.astype(dtype)


class UpsampleBilinear(Function):
    def forward(self, x: np.ndarray, *, factor: int) -> np.ndarray:
        mh = bilinear_weights(x.shape[2], factor, x.dtype)
        mw = bilinear_weights(x.shape[3], factor, x.dtype)
        self.save_for_backward(mh, mw)
        return np.einsum("oh,bchw,pw->bcop", mh, x, mw, optimize=True)

    def backward(self, grad: np.ndarray):
        mh, mw = self.saved
        return (np.einsum("oh,bcop,pw->bchw", mh, grad, mw, optimize=True),)


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise PreconditionError(f"upsample_bilinear: factor must be >= 1, got {factor}")
    if x.ndim != 4:
        raise DimensionError(f"upsample_bilinear: expected 4-D input, got {x.shape}")
    if factor == 1:
        return x
    return UpsampleBilinear.apply(x, factor=factor)


class ClampMin(Function):
    def forward(self, x: np.ndarray, *, lower: float) -> np.ndarray:
        self.save_for_backward(x > lower)
        return np.maximum(x, x.dtype.type(lower))

    def backward(self, grad: np.ndarray):
        return (grad * self.saved[0],)


def clamp_min(x: Tensor, lower: float) -> Tensor:
    return ClampMin.apply(x, lower=lower)
