import numpy as np
import pytest

from winlin.exceptions import ConfigurationError, DimensionError, PreconditionError
from winlin.tensor import Parameter, Tensor, gradcheck
from winlin.tensor import functional as F


def naive_conv2d(x, w, b=None, stride=1, padding=0, groups=1):
    batch, cin, h, wd = x.shape
    cout, cpg, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((batch, cout, oh, ow))
    per_group = cout // groups
    for n in range(batch):
        for o in range(cout):
            g = o // per_group
            for i in range(oh):
                for j in range(ow):
                    patch = xp[n, g * cpg : (g + 1) * cpg, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[n, o, i, j] = (patch * w[o]).sum() + (b[o] if b is not None else 0.0)
    return out


class TestTensor:
    def test_integer_data_becomes_float32(self):
        t = Tensor([1, 2, 3])
        assert t.dtype == np.float32

    def test_backward_needs_scalar(self):
        x = Parameter(np.ones((2, 2)))
        with pytest.raises(DimensionError):
            (x * 2.0).backward()

    def test_gradients_accumulate_over_shared_inputs(self):
        x = Parameter(np.array([1.0, -2.0, 3.0]), dtype=np.float64)
        y = (x * x + x).sum()
        y.backward()
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_non_leaf_has_no_grad(self):
        x = Parameter(np.array([1.0, 2.0]), dtype=np.float64)
        mid = x * 3.0
        mid.sum().backward()
        assert mid.grad is None
        np.testing.assert_allclose(x.grad, [3.0, 3.0])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(3, 2\)"):
            F.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_matmul_shape_mismatch(self):
        with pytest.raises(DimensionError):
            F.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


class TestConv2d:
    @pytest.mark.parametrize(
        "cin,cout,k,stride,padding,groups",
        [(3, 4, 3, 1, 1, 1), (3, 5, 3, 2, 1, 1), (4, 4, 3, 1, 1, 4), (4, 6, 2, 2, 0, 2), (2, 3, 1, 1, 0, 1)],
    )
    def test_matches_naive_loop(self, rng, cin, cout, k, stride, padding, groups):
        x = rng.standard_normal((2, cin, 7, 6))
        w = rng.standard_normal((cout, cin // groups, k, k))
        b = rng.standard_normal(cout)
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding, groups=groups)
        np.testing.assert_allclose(out.data, naive_conv2d(x, w, b, stride, padding, groups), atol=1e-12)

    def test_groups_must_divide_channels(self):
        with pytest.raises(ConfigurationError):
            F.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((4, 1, 3, 3))), groups=2)

    def test_output_smaller_than_one_pixel(self):
        with pytest.raises(PreconditionError):
            F.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


class TestMatmul:
    def test_matches_triple_loop(self, rng):
        for _ in range(10):
            m, k, n = (int(v) for v in rng.integers(1, 7, size=3))
            a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
            expected = np.zeros((m, n))
            for i in range(m):
                for j in range(n):
                    for p in range(k):
                        expected[i, j] += a[i, p] * b[p, j]
            np.testing.assert_allclose(F.matmul(Tensor(a), Tensor(b)).data, expected, atol=1e-12)


class TestRowOps:
    def test_softmax_of_zero_and_log_two(self):
        out = F.softmax_rows(Tensor(np.array([[0.0, np.log(2.0)]])))
        np.testing.assert_allclose(out.data, [[1 / 3, 2 / 3]], atol=1e-12)

    def test_softmax_matches_naive_and_sums_to_one(self, rng):
        x = rng.standard_normal((5, 7)) * 4.0
        out = F.softmax_rows(Tensor(x)).data
        naive = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
        np.testing.assert_allclose(out, naive, atol=1e-12)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_softmax_large_logits_stay_finite(self):
        out = F.softmax_rows(Tensor(np.array([[1000.0, 1000.0, -1000.0]])))
        np.testing.assert_allclose(out.data, [[0.5, 0.5, 0.0]], atol=1e-12)

    def test_l2_normalize_three_four(self):
        out = F.l2_normalize_rows(Tensor(np.array([[3.0, 4.0]])))
        np.testing.assert_allclose(out.data, [[0.6, 0.8]], atol=1e-12)

    def test_l2_normalize_unit_norm_and_zero_row(self, rng):
        x = rng.standard_normal((6, 5))
        x[2] = 0.0
        out = F.l2_normalize_rows(Tensor(x)).data
        assert np.isfinite(out).all()
        np.testing.assert_array_equal(out[2], 0.0)
        norms = np.linalg.norm(np.delete(out, 2, axis=0), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_relu6_values(self):
        out = F.relu6(Tensor(np.array([-1.0, 3.0, 7.0])))
        np.testing.assert_array_equal(out.data, [0.0, 3.0, 6.0])


class TestBatchNorm2d:
    def test_training_normalizes_and_updates_running_stats(self, rng):
        x = rng.standard_normal((4, 3, 5, 5)) * 3.0 + 2.0
        rm, rv = np.zeros(3), np.ones(3)
        y = F.batchnorm2d(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv, training=True)
        np.testing.assert_allclose(y.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
        np.testing.assert_allclose(y.data.var(axis=(0, 2, 3)), 1.0, rtol=1e-3)

        n = 4 * 5 * 5
        mean = x.mean(axis=(0, 2, 3))
        unbiased = x.var(axis=(0, 2, 3)) * n / (n - 1)
        np.testing.assert_allclose(rm, 0.1 * mean)
        np.testing.assert_allclose(rv, 0.9 + 0.1 * unbiased)

    def test_constant_input_normalizes_to_zero(self):
        x = np.full((2, 3, 4, 4), 7.5)
        rm, rv = np.zeros(3), np.ones(3)
        y = F.batchnorm2d(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv, training=True)
        assert np.isfinite(y.data).all()
        np.testing.assert_allclose(y.data, 0.0, atol=1e-12)

    def test_eval_uses_running_stats(self):
        x = np.full((1, 1, 2, 2), 5.0)
        rm, rv = np.array([1.0]), np.array([4.0])
        y = F.batchnorm2d(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), rm, rv, training=False)
        np.testing.assert_allclose(y.data, (5.0 - 1.0) / np.sqrt(4.0 + 1e-5))


class TestUpsampleBilinear:
    def test_half_pixel_centers(self):
        x = Tensor(np.array([[[[0.0, 1.0]]]]))
        out = F.upsample_bilinear(x, 2)
        np.testing.assert_allclose(out.data[0, 0, 0], [0.0, 0.25, 0.75, 1.0])

    def test_two_by_two_to_four_by_four(self):
        out = F.upsample_bilinear(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])), 2)
        expected = [
            [1.0, 1.25, 1.75, 2.0],
            [1.5, 1.75, 2.25, 2.5],
            [2.5, 2.75, 3.25, 3.5],
            [3.0, 3.25, 3.75, 4.0],
        ]
        np.testing.assert_allclose(out.data[0, 0], expected, atol=1e-12)

    def test_constant_map_stays_constant(self):
        out = F.upsample_bilinear(Tensor(np.full((1, 2, 3, 5), 0.7)), 4)
        assert out.shape == (1, 2, 12, 20)
        np.testing.assert_allclose(out.data, 0.7)


class TestGradcheck:
    def test_requires_float64(self):
        with pytest.raises(PreconditionError):
            gradcheck(F.relu6, [Parameter(np.ones(3), dtype=np.float32)])

    def test_matmul_gradient(self, rng):
        a = Parameter(rng.standard_normal((3, 4)), dtype=np.float64)
        b = Parameter(rng.standard_normal((4, 2)), dtype=np.float64)
        assert gradcheck(F.matmul, [a, b]) < 1e-7

    def test_detects_wrong_gradient(self, rng):
        from winlin.tensor import Function

        class BrokenSquare(Function):
            def forward(self, x):
                self.save_for_backward(x)
                return x * x

            def backward(self, grad):
                return (grad * self.saved[0],)

        x = Parameter(rng.uniform(1.0, 2.0, size=5), dtype=np.float64)
        assert gradcheck(lambda t: BrokenSquare.apply(t), [x]) > 0.1
