"""
Набор проверок градиентов конечными разностями (float64) по всем
дифференцируемым операциям, блокам сети и модели целиком.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..attention import AttentionParams, attention_exact, attention_linear, w_lmhsa
from ..exceptions import PreconditionError
from ..models import (
    BatchNorm2d,
    BuildFormer,
    BuildFormerBlock,
    ContextAggregation,
    Conv2d,
    ConvMLP,
    PatchMerge,
    SpatialPath,
)
from ..schemas import GradcheckRow, ModelConfig
from ..tensor import Parameter, Tensor, gradcheck
from ..tensor import functional as F
from .losses import bce_with_logits, dice_loss, joint_loss, laplacian_boundary
from .timing import timed

logger = logging.getLogger("winlin.services.gradcheck")

LINEAR_TOL = 1e-7
SMOOTH_TOL = 1e-4
MODEL_TOL = 1e-3
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
MODEL_SAMPLED_TENSORS = 64

Case = tuple[Callable[..., Tensor], Sequence[Tensor]]


@dataclass(frozen=True)
class OpCheck:
    name: str
    build: Callable[[np.random.Generator], Case]
    tolerance: float
    max_elements: int | None = None


def _t(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Parameter(rng.standard_normal(shape) * scale, dtype=np.float64)


def _away_from_kinks(rng: np.random.Generator, *shape: int, kinks: Sequence[float]) -> Tensor:
    x = rng.uniform(-3.0, 3.0, size=shape)
    for k in kinks:
        near = np.abs(x - k) < 0.05
        x[near] += 0.1
    return Parameter(x, dtype=np.float64)


def _const(arr: np.ndarray) -> Tensor:
    return Tensor(arr, dtype=np.float64)


def _as64(module):
    module.astype(np.float64)
    return module


def _inside_relu6(module, shift: float = 3.0, weight_scale: float = 0.1):
    """
    Сжимает веса свёрток и сдвигает beta BN так, чтобы входы ReLU6
    лежали в (0, 6) и конечные разности не попадали на изломы.
    """
    for m in module.modules():
        if isinstance(m, Conv2d):
            m.weight.data *= weight_scale
        elif isinstance(m, BatchNorm2d):
            m.beta.data[:] = shift
    return module


def _elementwise(rng):
    a, b = _t(rng, 2, 3, 4), _t(rng, 2, 3, 4)
    return (lambda a, b: F.mul(F.add(a, b), b)), [a, b]


def _div(rng):
    a = _t(rng, 3, 5)
    b = Parameter(rng.uniform(0.5, 2.0, size=(3, 5)), dtype=np.float64)
    return F.div, [a, b]


def _matmul(rng):
    return F.matmul, [_t(rng, 2, 4, 3), _t(rng, 2, 3, 5)]


def _shape_ops(rng):
    x = _t(rng, 2, 3, 5, 4)
    y = _t(rng, 2, 2, 6, 6)

    def fn(x, y):
        p = F.pad2d(x, 1, 2)
        cat = F.concat([p, F.crop2d(y, 6, 6)], axis=1)
        return F.reshape(F.transpose(cat, (0, 2, 3, 1)), (2, 6 * 6 * 5))

    return fn, [x, y]


def _conv(rng):
    x, w, b = _t(rng, 2, 4, 6, 6), _t(rng, 6, 2, 3, 3), _t(rng, 6)
    return (lambda x, w, b: F.conv2d(x, w, b, stride=2, padding=1, groups=2)), [x, w, b]


def _conv_dense(rng):
    x, w = _t(rng, 1, 3, 5, 5), _t(rng, 4, 3, 2, 2)
    return (lambda x, w: F.conv2d(x, w, stride=1, padding=0)), [x, w]


def _batchnorm(rng):
    x, g, b = _t(rng, 3, 2, 4, 4), _t(rng, 2), _t(rng, 2)
    rm, rv = np.zeros(2), np.ones(2)
    weights = _const(rng.standard_normal((3, 2, 4, 4)))

    def fn(x, g, b):
        y = F.batchnorm2d(x, g, b, rm, rv, training=True)
        return F.mul(y, weights)

    return fn, [x, g, b]


def _l2norm(rng):
    w = _const(rng.standard_normal((4, 5)))
    return (lambda x: F.mul(F.l2_normalize_rows(x), w)), [_t(rng, 4, 5)]


def _softmax(rng):
    w = _const(rng.standard_normal((3, 6)))
    return (lambda x: F.mul(F.softmax_rows(x), w)), [_t(rng, 3, 6)]


def _relu6(rng):
    return F.relu6, [_away_from_kinks(rng, 4, 5, kinks=(0.0, 6.0))]


def _sigmoid(rng):
    w = _const(rng.standard_normal((4, 5)))
    return (lambda x: F.mul(F.sigmoid(x), w)), [_t(rng, 4, 5)]


def _abs_clamp(rng):
    return F.abs_clamp01, [_away_from_kinks(rng, 4, 5, kinks=(-1.0, 0.0, 1.0))]


def _upsample(rng):
    w = _const(rng.standard_normal((1, 2, 8, 6)))
    return (lambda x: F.mul(F.upsample_bilinear(x, 2), w)), [_t(rng, 1, 2, 4, 3)]


def _attn_linear(rng):
    w = _const(rng.standard_normal((2, 7, 4)))
    return (lambda q, k, v: F.mul(attention_linear(q, k, v), w)), [
        _t(rng, 2, 7, 4),
        _t(rng, 2, 7, 4),
        _t(rng, 2, 7, 4),
    ]


def _attn_exact(rng):
    w = _const(rng.standard_normal((2, 7, 4)))
    return (lambda q, k, v: F.mul(attention_exact(q, k, v, scale=2.0), w)), [
        _t(rng, 2, 7, 4),
        _t(rng, 2, 7, 4),
        _t(rng, 2, 7, 4),
    ]


def _w_lmhsa(rng):
    dim = 4
    x = _t(rng, 1, dim, 5, 6)
    mats = [_t(rng, dim, dim, scale=0.5) for _ in range(4)]
    w = _const(rng.standard_normal((1, dim, 5, 6)))

    def fn(x, wq, wk, wv, wo):
        return F.mul(w_lmhsa(x, AttentionParams(dim, 2, wq, wk, wv, wo), window_side=4), w)

    return fn, [x, *mats]


def _laplacian(rng):
    # шахматный узор держит |Laplace(x)| в [0.16, 0.88], вдали от изломов 0 и 1
    ii, jj = np.indices((5, 5))
    high = (ii + jj) % 2 == 0
    x = np.where(high, rng.uniform(0.10, 0.11, (5, 5)), rng.uniform(0.01, 0.02, (5, 5)))
    return laplacian_boundary, [Parameter(x[None, None], dtype=np.float64)]


def _bce(rng):
    t = rng.random((1, 1, 4, 4))
    v = (rng.random((1, 1, 4, 4)) > 0.2).astype(np.float64)
    return (lambda x: bce_with_logits(x, t, v)), [_t(rng, 1, 1, 4, 4)]


def _dice(rng):
    t = (rng.random((1, 1, 4, 4)) > 0.5).astype(np.float64)
    v = np.ones((1, 1, 4, 4))
    p = Parameter(rng.uniform(0.1, 0.9, size=(1, 1, 4, 4)), dtype=np.float64)
    return (lambda p: dice_loss(p, t, v)), [p]


def _joint(rng):
    t = np.zeros((1, 1, 6, 6))
    t[0, 0, 1:4, 2:5] = 1.0
    v = np.ones((1, 1, 6, 6))
    v[..., -1] = 0.0
    return (lambda x: joint_loss(x, t, v)[0]), [_t(rng, 1, 1, 6, 6)]


def _patch_merge(rng):
    layer = _as64(PatchMerge(4, rng))
    x = _t(rng, 2, 4, 4, 4)
    return (lambda x, *_: layer(x)), [x, *layer.parameters()]


def _c_mlp(rng):
    layer = _as64(ConvMLP(4, 2.0, rng))
    x = _t(rng, 1, 4, 5, 5)
    return (lambda x, *_: layer(x)), [x, *layer.parameters()]


def _block(rng):
    block = _as64(BuildFormerBlock(4, 2, 2, rng, mlp_ratio=2.0)).eval()
    x = _t(rng, 1, 4, 4, 4)
    return (lambda x, *_: block(x)), [x, *block.parameters()]


def _scp(rng):
    path = _inside_relu6(_as64(SpatialPath([4, 4, 6, 6, 6, 6], [2, 2, 1, 1, 1, 1], rng))).eval()
    x = _t(rng, 1, 3, 8, 8)
    return (lambda x, *_: path(x)), [x, *path.parameters()]


def _context(rng):
    agg = _inside_relu6(_as64(ContextAggregation([4, 6, 8, 10], 4, 3, 4, rng))).eval()
    feats = [_t(rng, 1, c, 8 // 2**i, 8 // 2**i) for i, c in enumerate((4, 6, 8, 10))]
    spatial = _t(rng, 1, 3, 8, 8)

    def fn(f0, f1, f2, f3, s, *_):
        return agg([f0, f1, f2, f3], s)

    return fn, [*feats, spatial, *agg.parameters()]


def _model(rng):
    model = _as64(BuildFormer(ModelConfig.toy(window_side=2), seed=int(rng.integers(1 << 31)))).eval()
    img = _const(rng.random((1, 3, 32, 32)))
    params = model.parameters()
    picked = rng.choice(len(params), size=min(MODEL_SAMPLED_TENSORS, len(params)), replace=False)
    return (lambda *_: model(img)), [params[i] for i in sorted(picked)]


OP_SUITE: tuple[OpCheck, ...] = (
    OpCheck("add_mul", _elementwise, SMOOTH_TOL),
    OpCheck("div", _div, SMOOTH_TOL),
    OpCheck("matmul", _matmul, LINEAR_TOL),
    OpCheck("shape_ops", _shape_ops, LINEAR_TOL),
    OpCheck("conv2d_grouped", _conv, LINEAR_TOL),
    OpCheck("conv2d", _conv_dense, LINEAR_TOL),
    OpCheck("batchnorm2d", _batchnorm, SMOOTH_TOL),
    OpCheck("l2_normalize_rows", _l2norm, SMOOTH_TOL),
    OpCheck("softmax_rows", _softmax, SMOOTH_TOL),
    OpCheck("relu6", _relu6, LINEAR_TOL),
    OpCheck("sigmoid", _sigmoid, SMOOTH_TOL),
    OpCheck("abs_clamp01", _abs_clamp, LINEAR_TOL),
    OpCheck("upsample_bilinear", _upsample, LINEAR_TOL),
    OpCheck("attention_linear", _attn_linear, SMOOTH_TOL),
    OpCheck("attention_exact", _attn_exact, SMOOTH_TOL),
    OpCheck("w_lmhsa", _w_lmhsa, SMOOTH_TOL),
    OpCheck("laplacian_boundary", _laplacian, LINEAR_TOL),
    OpCheck("bce_with_logits", _bce, SMOOTH_TOL),
    OpCheck("dice_loss", _dice, SMOOTH_TOL),
    OpCheck("joint_loss", _joint, SMOOTH_TOL),
    OpCheck("patch_merge", _patch_merge, SMOOTH_TOL, max_elements=16),
    OpCheck("c_mlp", _c_mlp, SMOOTH_TOL, max_elements=16),
    OpCheck("buildformer_block", _block, SMOOTH_TOL, max_elements=16),
    OpCheck("scp_forward", _scp, SMOOTH_TOL, max_elements=16),
    OpCheck("context_aggregate", _context, SMOOTH_TOL, max_elements=16),
    OpCheck("buildformer", _model, MODEL_TOL, max_elements=1),
)


def check_op(op: OpCheck, seed: int) -> GradcheckRow:
    rng = np.random.default_rng([seed, sum(op.name.encode())])
    fn, inputs = op.build(rng)
    err = gradcheck(fn, inputs, max_elements_per_input=op.max_elements, seed=seed)
    row = GradcheckRow(op=op.name, seed=seed, max_rel_error=err, tolerance=op.tolerance)
    level = logging.INFO if row.passed else logging.WARNING
    logger.log(
        level,
        "gradcheck op | op=%s | seed=%d | max_rel_error=%.3e | passed=%s",
        op.name,
        seed,
        err,
        row.passed,
    )
    return row


def run_suite(
    seeds: Sequence[int] = DEFAULT_SEEDS,
    ops: Sequence[OpCheck] = OP_SUITE,
    only: Sequence[str] | None = None,
) -> list[GradcheckRow]:
    if only is not None:
        unknown = sorted(set(only) - {op.name for op in ops})
        if unknown:
            raise PreconditionError(f"unknown gradcheck ops: {','.join(unknown)}")
    selected = [op for op in ops if only is None or op.name in only]
    with timed("gradcheck suite", logger, ops=len(selected), seeds=len(seeds)):
        return [check_op(op, seed) for op in selected for seed in seeds]


def format_report(rows: Sequence[GradcheckRow]) -> str:
    lines = ["op,seed,max_rel_error,tolerance,passed"]
    for r in rows:
        lines.append(f"{r.op},{r.seed},{r.max_rel_error:.3e},{r.tolerance:.0e},{int(r.passed)}")
    return "\n".join(lines) + "\n"
