import numpy as np
import pytest

from winlin.exceptions import DimensionError
from winlin.services.losses import bce_probs, bce_with_logits, dice_loss, joint_loss, laplacian_boundary
from winlin.tensor import Parameter, Tensor


def as_map(a):
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(1, 1, *a.shape)


class TestLaplacianBoundary:
    def test_constant_map_marks_image_border(self):
        out = laplacian_boundary(as_map(np.ones((5, 5)))).data[0, 0]
        assert out[1:-1, 1:-1].max() == 0.0
        np.testing.assert_array_equal(out[0], 1.0)
        np.testing.assert_array_equal(out[:, -1], 1.0)

    def test_impulse(self):
        img = np.zeros((5, 5))
        img[2, 2] = 0.1
        out = laplacian_boundary(as_map(img)).data[0, 0]
        assert out[2, 2] == pytest.approx(0.8)
        assert out[1, 1] == pytest.approx(0.1)
        assert out[0, 0] == 0.0

    def test_square_boundary_is_ring(self):
        img = np.zeros((8, 8))
        img[2:6, 2:6] = 1.0
        out = laplacian_boundary(as_map(img)).data[0, 0]
        assert out[3:5, 3:5].max() == 0.0
        assert out[2, 2] == 1.0 and out[1, 3] == 1.0
        assert out[0, 0] == 0.0

    @pytest.mark.parametrize("seed", range(50))
    def test_binary_mask_matches_neighbourhood_scan(self, seed):
        rng = np.random.default_rng(seed)
        h, w = (int(v) for v in rng.integers(1, 65, size=2))
        mask = (rng.random((h, w)) < rng.uniform(0.1, 0.9)).astype(np.float64)
        # пиксель на границе, если хотя бы один из 8 соседей (вне карты = 0) отличается от него
        padded = np.pad(mask, 1)
        expected = np.zeros((h, w))
        for i in range(h):
            for j in range(w):
                window = padded[i : i + 3, j : j + 3]
                expected[i, j] = float((window != mask[i, j]).any())
        np.testing.assert_array_equal(laplacian_boundary(as_map(mask)).data[0, 0], expected)

    def test_needs_single_channel(self):
        with pytest.raises(DimensionError):
            laplacian_boundary(np.zeros((1, 2, 4, 4)))


class TestBinaryCrossEntropy:
    def test_zero_logit_is_ln2(self):
        x = Tensor(np.zeros((1, 1, 3, 3)))
        t = np.zeros((1, 1, 3, 3))
        t[0, 0, 0] = 1.0
        assert bce_with_logits(x, t, np.ones_like(t)).item() == pytest.approx(np.log(2.0))

    def test_large_logits_are_stable(self):
        x = Tensor(np.full((1, 1, 1, 2), 50.0))
        ones = np.ones((1, 1, 1, 2))
        assert bce_with_logits(x, ones, ones).item() == pytest.approx(0.0, abs=1e-12)
        assert bce_with_logits(x, np.zeros_like(ones), ones).item() == pytest.approx(50.0)

    def test_matches_naive_mean_over_valid(self, rng):
        x = rng.uniform(-4, 4, size=(2, 1, 4, 4))
        t = (rng.uniform(size=x.shape) > 0.5).astype(float)
        v = (rng.uniform(size=x.shape) > 0.3).astype(float)
        p = 1 / (1 + np.exp(-x))
        naive = (-(t * np.log(p) + (1 - t) * np.log(1 - p)) * v).sum() / v.sum()
        assert bce_with_logits(Tensor(x), t, v).item() == pytest.approx(naive, rel=1e-12)
        assert bce_probs(Tensor(p), t, v).item() == pytest.approx(naive, rel=1e-9)

    def test_probs_are_clipped(self):
        p = Parameter(np.array([[[[0.0, 1.0]]]]), dtype=np.float64)
        t = np.array([[[[1.0, 0.0]]]])
        loss = bce_probs(p, t, np.ones_like(t))
        assert np.isfinite(loss.item())
        loss.backward()
        np.testing.assert_array_equal(p.grad, 0.0)

    def test_gradient_is_sigmoid_minus_target(self, rng):
        x = Parameter(rng.standard_normal((1, 1, 2, 3)), dtype=np.float64)
        t = np.ones((1, 1, 2, 3))
        bce_with_logits(x, t, np.ones_like(t)).backward()
        np.testing.assert_allclose(x.grad, (1 / (1 + np.exp(-x.data)) - 1) / 6)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            bce_with_logits(Tensor(np.zeros((1, 1, 2, 2))), np.zeros((1, 1, 2, 3)), np.ones((1, 1, 2, 2)))


class TestDice:
    def test_identical_masks(self):
        t = np.zeros((1, 1, 4, 4))
        t[0, 0, 1:3, 1:3] = 1.0
        assert dice_loss(Tensor(t.copy()), t, np.ones_like(t)).item() == pytest.approx(0.0)

    @pytest.mark.parametrize("n", [1, 3, 8])
    def test_disjoint_masks(self, n):
        p = np.zeros((1, 1, 2, 8))
        t = np.zeros((1, 1, 2, 8))
        p[0, 0, 0, :n] = 1.0
        t[0, 0, 1, :n] = 1.0
        assert dice_loss(Tensor(p), t, np.ones_like(t)).item() == pytest.approx(1 - 1 / (2 * n + 1))

    def test_half_overlap(self):
        p = as_map([[1.0, 1.0, 0.0]])
        t = as_map([[0.0, 1.0, 1.0]])
        assert dice_loss(Tensor(p), t, np.ones_like(t)).item() == pytest.approx(0.4)

    def test_empty_masks_give_zero(self):
        z = np.zeros((1, 1, 3, 3))
        assert dice_loss(Tensor(z), z, np.ones_like(z)).item() == 0.0


class TestJointLoss:
    def test_confident_correct_prediction_is_near_zero(self, square_sample):
        target = square_sample.mask[None]
        logits = Tensor(np.where(target > 0.5, 20.0, -20.0))
        total, parts = joint_loss(logits, target, np.ones_like(target))
        assert total.item() < 1e-3
        assert parts.total == pytest.approx(parts.ce + parts.dice + parts.boundary)

    def test_uniform_zero_logits(self):
        t = np.zeros((1, 1, 4, 4))
        t[0, 0, :2] = 1.0
        _, parts = joint_loss(Tensor(np.zeros_like(t)), t, np.ones_like(t))
        assert parts.ce == pytest.approx(np.log(2.0))
        assert parts.dice == pytest.approx(8 / 17)
        assert parts.boundary > 0

    def test_invalid_pixels_do_not_matter(self, rng):
        logits = rng.standard_normal((1, 1, 8, 8))
        target = (rng.uniform(size=(1, 1, 8, 8)) > 0.5).astype(float)
        valid = np.zeros((1, 1, 8, 8))
        valid[..., :6, :5] = 1.0

        logits2, target2 = logits.copy(), target.copy()
        logits2[..., 6:, :] = 30.0
        target2[..., :, 5:] = 1.0 - target2[..., :, 5:]

        x1, x2 = Parameter(logits, dtype=np.float64), Parameter(logits2, dtype=np.float64)
        l1, p1 = joint_loss(x1, target, valid)
        l2, p2 = joint_loss(x2, target2, valid)
        assert p1 == p2
        l1.backward()
        assert np.all(x1.grad[valid == 0] == 0.0)

    def test_empty_valid_region(self, caplog):
        x = Parameter(np.ones((1, 1, 4, 4)), dtype=np.float64)
        t = np.ones((1, 1, 4, 4))
        total, parts = joint_loss(x, t, np.zeros_like(t))
        assert parts.empty_valid
        assert total.item() == 0.0
        total.backward()
        np.testing.assert_array_equal(x.grad, 0.0)
        assert "no valid pixels" in caplog.text
