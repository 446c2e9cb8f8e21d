import numpy as np
import pytest

from winlin.exceptions import ConfigurationError, PreconditionError
from winlin.models import (
    BuildFormer,
    BuildFormerBlock,
    ContextAggregation,
    ConvMLP,
    PatchEmbed,
    PatchMerge,
    count_parameters,
    expected_parameter_count,
)
from winlin.schemas import ModelConfig
from winlin.tensor import Tensor
from winlin.tensor import functional as F

SMALL_HEAD = {"fpn_dim": 32, "head_hidden": 16, "scp_channels": [8, 8, 16, 16, 16, 16]}


@pytest.fixture(scope="module")
def model():
    return BuildFormer(ModelConfig.toy(**SMALL_HEAD), seed=0)


def image(rng, h=64, w=64, batch=1):
    return Tensor(rng.uniform(0.0, 1.0, size=(batch, 3, h, w)), dtype=np.float32)


class TestShapes:
    def test_patch_embed_quarter_resolution(self, rng):
        out = PatchEmbed(3, 96, rng)(image(rng))
        assert out.shape == (1, 96, 16, 16)

    def test_patch_merge_halves_and_doubles(self, rng):
        x = Tensor(rng.standard_normal((1, 96, 56, 56)), dtype=np.float32)
        assert PatchMerge(96, rng)(x).shape == (1, 192, 28, 28)

    def test_spatial_path_quarter_resolution(self, rng):
        net = BuildFormer(ModelConfig.toy(fpn_dim=16, head_hidden=8), seed=1)
        assert net.scp_forward(image(rng)).shape == (1, 128, 16, 16)

    def test_gcp_pyramid(self, model, rng):
        feats = model.gcp_forward(image(rng))
        assert [f.shape for f in feats] == [
            (1, 96, 16, 16),
            (1, 192, 8, 8),
            (1, 384, 4, 4),
            (1, 768, 2, 2),
        ]

    def test_forward_returns_full_resolution_logits(self, model, rng):
        out = model(image(rng, batch=2))
        assert out.shape == (2, 1, 64, 64)
        assert out.dtype == np.float32
        assert np.isfinite(out.data).all()

    def test_forward_rejects_unpadded_input(self, model, rng):
        with pytest.raises(PreconditionError, match="pad_to_multiple"):
            model(image(rng, h=48, w=64))

    def test_forward_rejects_wrong_channels(self, model):
        with pytest.raises(PreconditionError):
            model(Tensor(np.zeros((1, 1, 32, 32)), dtype=np.float32))

    def test_patch_embed_needs_multiple_of_four(self, rng):
        with pytest.raises(PreconditionError):
            PatchEmbed(3, 96, rng)(image(rng, h=30, w=32))

    def test_patch_merge_needs_even_size(self, rng):
        with pytest.raises(PreconditionError):
            PatchMerge(96, rng)(Tensor(np.zeros((1, 96, 7, 8)), dtype=np.float32))

    def test_spatial_path_disabled(self, rng):
        net = BuildFormer(ModelConfig.toy(use_scp=False, fpn_dim=16, head_hidden=8))
        assert net.spatial is None
        with pytest.raises(ConfigurationError):
            net.scp_forward(image(rng))
        assert net(image(rng, 32, 32)).shape == (1, 1, 32, 32)


class TestLayers:
    def test_patch_embed_residual_with_zero_depthwise(self, rng):
        embed = PatchEmbed(3, 32, rng)
        embed.dw.weight.data[...] = 0.0
        x = image(rng, 16, 16)
        np.testing.assert_array_equal(embed(x).data, embed.stem2(embed.stem1(x)).data)

    def test_cmlp_reaches_neighbours(self, rng):
        mlp = ConvMLP(8, 4.0, rng)
        x = rng.standard_normal((1, 8, 8, 8))
        x2 = x.copy()
        x2[0, :, 4, 4] += 1.0
        diff = np.abs(mlp(Tensor(x2)).data - mlp(Tensor(x)).data).max(axis=1)[0]
        assert (diff[3:6, 3:6] > 0).all()
        diff[3:6, 3:6] = 0.0
        assert diff.max() < 1e-6

    def test_pointwise_mlp_stays_local(self, rng):
        mlp = ConvMLP(4, 2.0, rng, depthwise=False)
        assert mlp.dw is None
        x = rng.standard_normal((1, 4, 8, 8))
        x2 = x.copy()
        x2[0, :, 4, 4] += 1.0
        diff = np.abs(mlp(Tensor(x2)).data - mlp(Tensor(x)).data).max(axis=1)[0]
        assert diff[4, 4] > 0
        diff[4, 4] = 0.0
        assert diff.max() < 1e-6


class TestBuildFormerBlock:
    def test_zeroed_outputs_give_identity(self, rng):
        block = BuildFormerBlock(32, 1, 4, rng)
        block.attn.wo.data[...] = 0.0
        block.mlp.fc2.weight.data[...] = 0.0
        block.mlp.fc2.bias.data[...] = 0.0
        x = Tensor(rng.standard_normal((2, 32, 8, 8)), dtype=np.float32)
        np.testing.assert_array_equal(block(x).data, x.data)

    def test_large_input_stays_finite(self, rng):
        block = BuildFormerBlock(32, 1, 4, rng)
        x = Tensor(rng.standard_normal((1, 32, 8, 8)) * 100.0, dtype=np.float32)
        assert np.isfinite(block(x).data).all()

    def test_convolution_carries_information_across_windows(self, rng):
        block = BuildFormerBlock(32, 1, 4, rng).eval()
        x = rng.standard_normal((1, 32, 8, 8)).astype(np.float32)
        x2 = x.copy()
        x2[0, :, 0, 3] += 1.0
        base = block(Tensor(x)).data
        moved = block(Tensor(x2)).data
        assert np.abs(moved[:, :, 0:4, 4] - base[:, :, 0:4, 4]).max() > 0
        np.testing.assert_allclose(moved[:, :, 6:, 6:], base[:, :, 6:, 6:], atol=1e-6)

    def test_exact_attention_variant(self, rng):
        block = BuildFormerBlock(32, 1, 4, rng, attention="exact")
        assert block.attn.kind == "exact"
        x = Tensor(rng.standard_normal((1, 32, 6, 6)), dtype=np.float32)
        assert block(x).shape == (1, 32, 6, 6)


class TestParameterCount:
    @pytest.mark.parametrize(
        "overrides",
        [{}, {"mlp": "mlp"}, {"use_scp": False}, {"attention": "exact"}],
    )
    def test_matches_analytic_count(self, overrides):
        config = ModelConfig.toy(**SMALL_HEAD, **overrides)
        assert count_parameters(BuildFormer(config)) == expected_parameter_count(config)

    def test_ablations_change_count(self):
        base = ModelConfig.toy(**SMALL_HEAD)
        assert expected_parameter_count(base.model_copy(update={"mlp": "mlp"})) < expected_parameter_count(base)
        assert expected_parameter_count(base.model_copy(update={"use_scp": False})) < expected_parameter_count(base)
        assert expected_parameter_count(ModelConfig.full_scale(**SMALL_HEAD)) > expected_parameter_count(base)

    def test_parameter_names_are_unique_paths(self, model):
        names = [name for name, _ in model.named_parameters()]
        assert len(names) == len(set(names))
        assert "patch_embed.stem1.conv.weight" in names
        assert all(p.name == name for name, p in model.named_parameters())


class TestContextAggregation:
    def _feats(self, rng, base=8):
        return [
            Tensor(rng.standard_normal((1, c, base // 2**i, base // 2**i)), dtype=np.float32)
            for i, c in enumerate([8, 16, 32, 64])
        ]

    def test_zero_laterals_ignore_global_features(self, rng):
        cam = ContextAggregation([8, 16, 32, 64], 8, 4, 6, rng).eval()
        for conv in cam.laterals:
            conv.weight.data[...] = 0.0
            conv.bias.data[...] = 0.0
        spatial = Tensor(rng.standard_normal((1, 4, 8, 8)), dtype=np.float32)
        a = cam(self._feats(rng), spatial)
        b = cam(self._feats(rng), spatial)
        assert a.shape == (1, 6, 8, 8)
        np.testing.assert_array_equal(a.data, b.data)

    def test_resolution_mismatch(self, rng):
        cam = ContextAggregation([8, 16, 32, 64], 8, None, 6, rng)
        feats = self._feats(rng)
        feats[2] = Tensor(np.zeros((1, 32, 3, 3)), dtype=np.float32)
        with pytest.raises(ConfigurationError):
            cam(feats)

    def test_spatial_map_required_and_checked(self, rng):
        cam = ContextAggregation([8, 16, 32, 64], 8, 4, 6, rng)
        with pytest.raises(ConfigurationError):
            cam(self._feats(rng))
        with pytest.raises(ConfigurationError):
            cam(self._feats(rng), Tensor(np.zeros((1, 4, 4, 4)), dtype=np.float32))

    def test_upsampling_path_is_differentiable(self, rng):
        cam = ContextAggregation([8, 16, 32, 64], 8, None, 6, rng)
        feats = self._feats(rng)
        cam(feats).sum().backward()
        assert all(conv.weight.grad is not None for conv in cam.laterals)


class TestDeterminism:
    def test_same_seed_same_weights_and_output(self, rng):
        config = ModelConfig.toy(**SMALL_HEAD)
        a, b = BuildFormer(config, seed=3), BuildFormer(config, seed=3)
        for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(pa.data, pb.data, err_msg=name)
        x = image(rng, 32, 32)
        np.testing.assert_array_equal(a.eval()(x).data, b.eval()(x).data)

    def test_different_seed_different_weights(self):
        config = ModelConfig.toy(**SMALL_HEAD)
        a, b = BuildFormer(config, seed=0), BuildFormer(config, seed=1)
        assert not np.array_equal(a.head.weight.data, b.head.weight.data)

    def test_float64_cast(self, rng):
        net = BuildFormer(ModelConfig.toy(**SMALL_HEAD)).astype(np.float64).eval()
        out = net(Tensor(rng.uniform(size=(1, 3, 32, 32))))
        assert out.dtype == np.float64
        assert F.sigmoid(out).data.max() <= 1.0
