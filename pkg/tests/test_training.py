import csv

import numpy as np
import pytest

from winlin.data import read_mask, synth_generate, write_image
from winlin.exceptions import PreconditionError, TrainingDivergedError
from winlin.models import BuildFormer, load_checkpoint
from winlin.schemas import ModelConfig, TrainConfig
from winlin.services import evaluate, evaluate_checkpoint, train
from winlin.services.inference import tta_predict
from winlin.services.optim import cosine_lr
from winlin.services.prediction_service import predict_directory, predict_image
from winlin.services.training_service import LOG_COLUMNS
from winlin.tensor import Tensor

TOY = ModelConfig.toy(fpn_dim=16, head_hidden=8, scp_channels=[8, 8, 8, 8, 8, 8])


def quick(**overrides):
    return TrainConfig(**{"epochs": 1, "batch_size": 2, "eval_every": 1, **overrides})


def read_log(path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def mask_oracle(x: Tensor) -> Tensor:
    """Логиты из первого канала: изображение несёт маску в канале 0."""
    return Tensor((x.data[:, :1] - 0.5) * 40.0)


def oracle_samples(n=3, size=32):
    samples = []
    for s in synth_generate(5, n, size):
        image = np.repeat(s.mask, 3, axis=0)
        samples.append(s.replace(image=image))
    return samples


@pytest.fixture
def samples():
    return synth_generate(0, 2, 32)


class TestTrain:
    def test_one_epoch_smoke(self, samples, tmp_path):
        result = train(BuildFormer(TOY), samples, quick(), tmp_path)
        assert result.checkpoint_path == tmp_path / "final.bfck"
        assert result.checkpoint_path.exists()
        assert len(result.epoch_losses) == 1 and np.isfinite(result.epoch_losses[0])
        rows = read_log(result.log_path)
        assert list(rows[0]) == LOG_COLUMNS
        assert len(rows) == 1
        ckpt = load_checkpoint(result.checkpoint_path)
        assert ckpt.epoch == 1
        assert ckpt.optimizer is not None and ckpt.optimizer.step == 1

    def test_same_seed_is_reproducible(self, samples, tmp_path):
        a = train(BuildFormer(TOY, seed=2), samples, quick(), tmp_path / "a", seed=4)
        b = train(BuildFormer(TOY, seed=2), samples, quick(), tmp_path / "b", seed=4)
        assert a.log_path.read_text() == b.log_path.read_text()
        assert a.checkpoint_path.read_bytes() == b.checkpoint_path.read_bytes()

    def test_cosine_schedule_is_logged_per_step(self, samples, tmp_path):
        config = quick(epochs=2, batch_size=1, eval_every=5, base_lr=1e-3, min_lr=1e-5)
        result = train(BuildFormer(TOY), samples, config, tmp_path)
        expected = [cosine_lr(s, 4, 1e-3, 1e-5) for s in range(4)]
        assert result.lrs == expected
        rows = read_log(result.log_path)
        assert [float(r["lr"]) for r in rows] == expected
        assert [int(r["step"]) for r in rows] == [0, 1, 2, 3]
        assert [int(r["epoch"]) for r in rows] == [1, 1, 2, 2]
        assert not (tmp_path / "epoch_0001.bfck").exists()

    def test_intermediate_checkpoints_and_validation(self, samples, tmp_path):
        config = quick(epochs=2, eval_every=1)
        result = train(BuildFormer(TOY), samples, config, tmp_path, val_samples=samples[:1])
        assert (tmp_path / "epoch_0001.bfck").exists()
        assert sorted(result.evals) == [1, 2]
        assert 0.0 <= result.evals[2].iou <= 1.0

    def test_fine_tune_starts_from_checkpoint(self, samples, tmp_path):
        first = train(BuildFormer(TOY, seed=0), samples, quick(), tmp_path / "first")
        start = load_checkpoint(first.checkpoint_path).state

        frozen = quick(base_lr=1e-12, min_lr=1e-12, weight_decay=0.0)
        model = BuildFormer(TOY, seed=1)
        train(model, samples, frozen, tmp_path / "second", init_checkpoint=first.checkpoint_path)
        for name, p in model.named_parameters():
            np.testing.assert_allclose(p.data, start[name], atol=1e-8, err_msg=name)

    def test_nan_loss_aborts(self, samples, tmp_path):
        model = BuildFormer(TOY)
        model.head.bias.data[...] = np.nan
        with pytest.raises(TrainingDivergedError) as err:
            train(model, samples, quick(), tmp_path)
        assert (err.value.epoch, err.value.step, err.value.last_good) == (1, 0, None)

    def test_random_crop_batches(self, tmp_path):
        samples = synth_generate(1, 2, 64)
        result = train(BuildFormer(TOY), samples, quick(crop_size=32), tmp_path)
        assert np.isfinite(result.epoch_losses[0])

    def test_empty_training_set(self, tmp_path):
        with pytest.raises(PreconditionError):
            train(BuildFormer(TOY), [], quick(), tmp_path)

    @pytest.mark.slow
    def test_loss_goes_down_on_tiny_set(self, tmp_path):
        samples = synth_generate(3, 2, 32)
        config = TrainConfig(epochs=30, batch_size=2, eval_every=30, flip_p=0.0, base_lr=2e-3)
        result = train(BuildFormer(TOY), samples, config, tmp_path)
        assert result.epoch_losses[-1] < result.epoch_losses[0]


@pytest.fixture(scope="module")
def overfit_run(tmp_path_factory):
    train_set = synth_generate(0, 16, 64)
    val_set = synth_generate(0, 8, 64, stream=1)
    out = tmp_path_factory.mktemp("overfit")
    model = BuildFormer(ModelConfig.toy(), seed=0)
    result = train(model, train_set, TrainConfig.toy(), out, seed=0)
    return model, result, train_set, val_set


@pytest.mark.slow
class TestToyOverfit:
    def test_reaches_iou_bar(self, overfit_run):
        model, _, train_set, val_set = overfit_run
        assert evaluate(model, train_set, use_tta=False).iou >= 0.95
        assert evaluate(model, val_set, use_tta=False).iou >= 0.80

    def test_loss_decreases_over_first_epochs(self, tmp_path):
        samples = synth_generate(0, 16, 64)
        monotone = 0
        for seed in range(10):
            model = BuildFormer(ModelConfig.toy(), seed=seed)
            config = TrainConfig.toy(epochs=10, min_lr=1e-3)
            result = train(model, samples, config, tmp_path / str(seed), seed=seed)
            losses = result.epoch_losses
            monotone += all(b < a for a, b in zip(losses, losses[1:]))
        assert monotone >= 9

    def test_fine_tune_keeps_iou(self, overfit_run, tmp_path):
        _, first, train_set, val_set = overfit_run
        before = evaluate_checkpoint(
            first.checkpoint_path, val_set, use_tta=False, expected=ModelConfig.toy()
        ).iou

        preset = TrainConfig.toy(epochs=5, eval_every=1).model_dump(exclude={"base_lr"})
        config = TrainConfig.fine_tune(**preset)
        assert config.base_lr == 5e-4
        result = train(
            BuildFormer(ModelConfig.toy(), seed=1),
            train_set,
            config,
            tmp_path,
            seed=1,
            init_checkpoint=first.checkpoint_path,
            val_samples=val_set,
        )
        assert result.evals[1].iou == pytest.approx(before, abs=0.05)


class TestEvaluate:
    def test_perfect_oracle(self):
        report = evaluate(mask_oracle, oracle_samples())
        assert (report.iou, report.f1) == (1.0, 1.0)

    def test_padding_is_not_counted(self):
        samples = oracle_samples(1, size=40)
        report = evaluate(mask_oracle, samples, use_tta=False)
        assert report.counts.total == 40 * 40

    def test_model_mode_is_restored(self, samples):
        model = BuildFormer(TOY).train()
        evaluate(model, samples[:1], use_tta=False)
        assert model.training

    def test_evaluate_checkpoint(self, samples, tmp_path):
        result = train(BuildFormer(TOY), samples, quick(), tmp_path)
        with_tta = evaluate_checkpoint(result.checkpoint_path, samples, use_tta=True, expected=TOY)
        assert 0.0 <= with_tta.iou <= 1.0

    def test_tta_averages_flipped_predictions(self, rng):
        images = rng.uniform(size=(1, 3, 32, 32))
        probs = tta_predict(lambda x: Tensor(x.data[:, :1]), images)
        np.testing.assert_allclose(probs, 1 / (1 + np.exp(-images[:, :1])))

    @pytest.mark.parametrize("axes", [(-1,), (-2,), (-2, -1)])
    def test_tta_commutes_with_flips_on_model(self, rng, axes):
        model = BuildFormer(TOY, seed=2).eval()
        images = rng.uniform(size=(2, 3, 32, 32)).astype(np.float32)
        flipped = np.ascontiguousarray(np.flip(images, axes))
        expected = np.flip(tta_predict(model, images), axes)
        np.testing.assert_allclose(tta_predict(model, flipped), expected, atol=1e-5)

    def test_unknown_flip(self):
        with pytest.raises(PreconditionError):
            tta_predict(mask_oracle, np.zeros((1, 3, 32, 32)), flips=["rot90"])


class TestPredict:
    def test_predict_image_keeps_original_size(self, square_sample):
        image = np.repeat(square_sample.mask, 3, axis=0)[:, :30, :27]
        mask = predict_image(mask_oracle, image)
        assert mask.shape == (1, 30, 27)
        np.testing.assert_array_equal(mask, square_sample.mask[:, :30, :27])

    def test_predict_directory(self, tmp_path, square_sample):
        in_dir = tmp_path / "in"
        write_image(in_dir / "a.png", np.repeat(square_sample.mask, 3, axis=0))
        write_image(in_dir / "b.ppm", np.zeros((3, 20, 24)))
        (in_dir / "notes.txt").write_text("skip me")
        written = predict_directory(mask_oracle, in_dir, tmp_path / "out", use_tta=False)
        assert [p.name for p in written] == ["a.pgm", "b.pgm"]
        np.testing.assert_array_equal(read_mask(written[0]), square_sample.mask)
        assert read_mask(written[1]).shape == (1, 20, 24)
