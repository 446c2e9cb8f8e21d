import math

import numpy as np
import pytest

from winlin.exceptions import NonFiniteGradientError, PreconditionError
from winlin.services.optim import AdamW, clip_grad_norm, cosine_lr
from winlin.tensor import Parameter


def param(values, grad=None):
    p = Parameter(np.asarray(values, dtype=np.float64), dtype=np.float64)
    if grad is not None:
        p.grad = np.asarray(grad, dtype=np.float64)
    return p


class TestCosineLr:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 100, 1e-3, 1e-5) == pytest.approx(1e-3)
        assert cosine_lr(100, 100, 1e-3, 1e-5) == pytest.approx(1e-5)
        assert cosine_lr(50, 100, 1e-3, 1e-5) == pytest.approx((1e-3 + 1e-5) / 2)

    def test_monotone_decay(self):
        lrs = [cosine_lr(s, 20, 0.1, 0.0) for s in range(21)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    @pytest.mark.parametrize("step,total", [(-1, 10), (11, 10), (0, 0)])
    def test_out_of_range(self, step, total):
        with pytest.raises(PreconditionError):
            cosine_lr(step, total, 0.1, 0.0)


class TestAdamW:
    def test_zero_gradient_without_decay_keeps_weights(self):
        p = param([1.0, -2.0], grad=[0.0, 0.0])
        AdamW([("p", p)], weight_decay=0.0).step(0.1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_parameters_without_gradient_are_skipped(self):
        p = param([1.0, 2.0])
        opt = AdamW([("p", p)])
        opt.step(0.1)
        np.testing.assert_array_equal(p.data, [1.0, 2.0])
        assert "p" not in opt.m

    def test_first_step_moves_by_lr_against_gradient_sign(self):
        p = param([1.0, 1.0, 1.0], grad=[0.3, -2.0, 1e3])
        AdamW([("p", p)], weight_decay=0.0).step(0.01)
        np.testing.assert_allclose(p.data, [0.99, 1.01, 0.99], atol=1e-6)

    def test_matches_reference_loop(self, rng):
        beta1, beta2, eps, wd, lr = 0.9, 0.999, 1e-8, 0.05, 0.01
        w0 = rng.standard_normal(5)
        grads = rng.standard_normal((10, 5))

        p = param(w0)
        opt = AdamW([("p", p)], betas=(beta1, beta2), eps=eps, weight_decay=wd)
        ref, m, v = w0.copy(), np.zeros(5), np.zeros(5)
        for t, g in enumerate(grads, start=1):
            p.grad = g.copy()
            opt.step(lr)
            ref = ref - lr * wd * ref
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            ref = ref - lr * (m / (1 - beta1**t)) / (np.sqrt(v / (1 - beta2**t)) + eps)
        np.testing.assert_allclose(p.data, ref, atol=1e-10, rtol=0)
        assert opt.step_count == 10

    def test_non_finite_gradient_aborts_whole_step(self):
        good = param([1.0], grad=[0.5])
        bad = param([2.0], grad=[math.nan])
        opt = AdamW([("good", good), ("bad", bad)])
        with pytest.raises(NonFiniteGradientError) as err:
            opt.step(0.1)
        assert err.value.parameter == "bad"
        assert good.data[0] == 1.0
        assert opt.step_count == 0

    def test_state_export_and_resume(self, rng):
        grads = rng.standard_normal((4, 3))
        w0 = rng.standard_normal(3)

        straight = param(w0)
        opt = AdamW([("w", straight)])
        for g in grads:
            straight.grad = g.copy()
            opt.step(0.01)

        resumed = param(w0)
        first = AdamW([("w", resumed)])
        for g in grads[:2]:
            resumed.grad = g.copy()
            first.step(0.01)
        second = AdamW([("w", resumed)])
        second.load_state(first.export_state())
        for g in grads[2:]:
            resumed.grad = g.copy()
            second.step(0.01)
        np.testing.assert_allclose(resumed.data, straight.data, atol=1e-12)

    def test_zero_grad(self):
        p = param([1.0], grad=[1.0])
        opt = AdamW([("p", p)])
        opt.zero_grad()
        assert p.grad is None


class TestClipGradNorm:
    def test_scales_down_to_max_norm(self):
        a, b = param([0.0], grad=[3.0]), param([0.0], grad=[4.0])
        total = clip_grad_norm([a, b], 1.0)
        assert total == pytest.approx(5.0)
        np.testing.assert_allclose([a.grad[0], b.grad[0]], [0.6, 0.8], atol=1e-9)

    def test_small_gradients_untouched(self):
        a = param([0.0, 0.0], grad=[0.1, 0.2])
        clip_grad_norm([a, param([1.0])], 10.0)
        np.testing.assert_array_equal(a.grad, [0.1, 0.2])
