import numpy as np
import pytest

from urcsa import trainer as TR
from urcsa.errors import ConfigError, DimensionError, UsageError
from urcsa.losses import FeatureExtractor, LossWeights
from urcsa.network import ModelConfig, URCSANet
from urcsa.tensor import Parameter, Tensor


def rand(shape, seed=0):
    return np.random.default_rng(seed).random(shape)


def adam_oracle(values, grads, lr, steps):
    """Hand-written scalar Adam, independent of the trainer implementation."""
    b1, b2, eps = 0.9, 0.999, 1e-8
    theta = float(values)
    m = v = 0.0
    for t in range(1, steps + 1):
        g = float(grads[t - 1])
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return theta


class TestAdam:
    def test_matches_scalar_oracle_over_ten_steps(self):
        grads = np.random.default_rng(0).standard_normal(10)
        p = Parameter(np.array([0.5]), "p")
        state = TR.AdamState([p])
        for g in grads:
            p.grad = np.array([g])
            TR.adam_step([p], state, lr=0.01)
        expected = adam_oracle(0.5, grads, 0.01, 10)
        assert p.data[0] == pytest.approx(expected, abs=1e-12)

    def test_zero_grad_leaves_parameters(self):
        p = Parameter(rand((3, 3), 1), "p")
        before = p.data.copy()
        state = TR.AdamState([p])
        p.grad = np.zeros_like(p.data)
        TR.adam_step([p], state, lr=0.1)
        assert np.array_equal(p.data, before)

    def test_first_step_is_signed_lr(self):
        p = Parameter(np.array([1.0]), "p")
        state = TR.AdamState([p])
        p.grad = np.array([3.7])
        TR.adam_step([p], state, lr=0.01)
        assert p.data[0] == pytest.approx(1.0 - 0.01, rel=1e-6)

    def test_missing_grad_raises(self):
        p = Parameter(np.array([1.0]), "p")
        with pytest.raises(UsageError):
            TR.adam_step([p], TR.AdamState([p]), lr=0.01)

    def test_grads_cleared_after_step(self):
        p = Parameter(np.array([1.0]), "p")
        state = TR.AdamState([p])
        p.grad = np.array([1.0])
        TR.adam_step([p], state, lr=0.01)
        assert p.grad is None

    def test_identical_runs_identical_trajectories(self):
        def run():
            p = Parameter(np.array([0.3, -0.2]), "p")
            state = TR.AdamState([p])
            rng = np.random.default_rng(7)
            for _ in range(5):
                p.grad = rng.standard_normal(2)
                TR.adam_step([p], state, lr=0.05)
            return p.data.copy()

        assert np.array_equal(run(), run())


class TestSchedule:
    def test_initial_value(self):
        cfg = TR.TrainConfig(decay_every=50, total_epochs=200)
        assert TR.lr_at_epoch(cfg, 0) == 5e-4

    def test_first_decay(self):
        cfg = TR.TrainConfig(decay_every=50, total_epochs=200)
        assert TR.lr_at_epoch(cfg, 50) == pytest.approx(5e-4 / 1.2)
        assert TR.lr_at_epoch(cfg, 100) == pytest.approx(5e-4 / 1.44)

    def test_piecewise_constant_with_jumps_at_multiples(self):
        cfg = TR.TrainConfig(decay_every=10, total_epochs=100)
        values = [TR.lr_at_epoch(cfg, e) for e in range(35)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        for e in range(34):
            if (e + 1) % 10 == 0:
                assert values[e + 1] < values[e]
            else:
                assert values[e + 1] == values[e]


class TestCrop:
    def test_full_size_crop_is_identity(self):
        low, high = rand((3, 8, 8), 2), rand((3, 8, 8), 3)
        lc, hc = TR.random_crop_pair(low, high, 8, 8, np.random.default_rng(0))
        assert np.array_equal(lc, low) and np.array_equal(hc, high)

    def test_same_window_for_both_images(self):
        marker = np.zeros((1, 16, 16))
        marker[0, 5, 9] = 1.0
        lc, hc = TR.random_crop_pair(marker, marker.copy(), 8, 8,
                                     np.random.default_rng(1))
        assert np.array_equal(lc, hc)

    def test_reproducible_offsets(self):
        low, high = rand((3, 20, 20), 4), rand((3, 20, 20), 5)
        a = TR.random_crop_pair(low, high, 8, 8, np.random.default_rng(9))
        b = TR.random_crop_pair(low, high, 8, 8, np.random.default_rng(9))
        assert np.array_equal(a[0], b[0])

    def test_too_small_image(self):
        with pytest.raises(DimensionError):
            TR.random_crop_pair(rand((3, 4, 4)), rand((3, 4, 4)), 8, 8,
                                np.random.default_rng(0))


def toy_pairs(n=2, size=12, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        high = rng.random((3, size, size)) * 0.6 + 0.2
        low = high * 0.3
        pairs.append((low, high))
    return pairs


def tiny_model(seed=0, **overrides):
    cfg = dict(base_channels=4, n_blocks=1, seed=seed)
    cfg.update(overrides)
    return URCSANet(ModelConfig(**cfg))


@pytest.fixture(scope="module")
def extractor32():
    return FeatureExtractor(seed=0, dtype=np.float32)


class TestTrainImages:
    def test_loss_decreases_and_log_fields(self, extractor32):
        cfg = TR.TrainConfig(total_epochs=3, stage1_fraction=0.5, crop_h=12,
                             crop_w=12, seed=0, decay_every=50)
        log = TR.train_images(toy_pairs(), tiny_model(), cfg, extractor32)
        assert len(log.entries) == 3
        assert log.entries[1]["loss"] < log.entries[0]["loss"]
        for key in ("epoch", "stage", "lr", "loss", "psnr", "ssim"):
            assert key in log.entries[0]
        assert all(f"{k}=" in log.lines[0] for k in ("epoch", "lr", "loss", "psnr", "ssim"))

    def test_stage_switch_observable(self, extractor32):
        cfg = TR.TrainConfig(total_epochs=4, stage1_fraction=0.5, crop_h=12,
                             crop_w=12, seed=0)
        log = TR.train_images(toy_pairs(), tiny_model(), cfg, extractor32)
        stages = [e["stage"] for e in log.entries]
        assert stages == ["1", "1", "2", "2"]

    def test_deterministic_checkpoints(self, tmp_path, extractor32):
        cfg = TR.TrainConfig(total_epochs=2, crop_h=12, crop_w=12, seed=3)

        def run(path):
            TR.train_images(toy_pairs(), tiny_model(seed=1), cfg,
                            FeatureExtractor(seed=0, dtype=np.float32),
                            checkpoint_path=path)
            return path.read_bytes()

        assert run(tmp_path / "a.ckpt") == run(tmp_path / "b.ckpt")

    def test_empty_dataset_rejected(self, extractor32):
        with pytest.raises(ConfigError):
            TR.train_images([], tiny_model(), TR.TrainConfig(crop_h=12, crop_w=12),
                            extractor32)

    def test_log_file_appended(self, tmp_path, extractor32):
        cfg = TR.TrainConfig(total_epochs=2, crop_h=12, crop_w=12, seed=0)
        path = tmp_path / "train.log"
        TR.train_images(toy_pairs(), tiny_model(), cfg, extractor32, log_path=path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("epoch=0 ")


def toy_frame_pairs(size=12, seed=0, flicker=0.1):
    rng = np.random.default_rng(seed)
    high = rng.random((3, size, size)) * 0.5 + 0.25
    low_k = high * 0.3
    low_k1 = np.clip(low_k + flicker, 0, 1)
    return [(low_k, low_k1, high.copy(), high.copy())]


class TestTrainVideo:
    def test_components_logged_and_nonnegative(self, extractor32):
        cfg = TR.TrainConfig(total_epochs=3, crop_h=12, crop_w=12, seed=0)
        log = TR.train_video(toy_frame_pairs(), tiny_model(), cfg, extractor32)
        for e in log.entries:
            assert e["ldif"] >= 0.0 and e["lself"] >= 0.0
        assert log.entries[-1]["loss"] < log.entries[0]["loss"]

    def test_zero_temporal_weights_match_paired_stage1(self, extractor32):
        # One epoch, one sample: the logged loss must equal the mean stage-1
        # value over the two frames.
        from urcsa.losses import stage1_loss

        sample = toy_frame_pairs(seed=5)
        cfg = TR.TrainConfig(total_epochs=1, crop_h=12, crop_w=12, seed=0)
        model = tiny_model(seed=2)
        frozen = URCSANet(model.config)  # same seed, same init
        w = LossWeights(alpha=0.0, beta=0.0, stage="video")
        log = TR.train_video(sample, model, cfg, extractor32, weights=w)

        low_k, low_k1, high_k, high_k1 = [a.astype(np.float32) for a in sample[0]]
        pk = frozen.forward(Tensor(low_k))
        pk1 = frozen.forward(Tensor(low_k1))
        s1a, _ = stage1_loss(pk, Tensor(high_k), extractor32)
        s1b, _ = stage1_loss(pk1, Tensor(high_k1), extractor32)
        expected = 0.5 * (s1a.item() + s1b.item())
        assert log.entries[0]["loss"] == pytest.approx(expected, rel=1e-6)

    def test_bad_sample_arity(self, extractor32):
        with pytest.raises(ConfigError):
            TR.train_video([(rand((3, 12, 12)), rand((3, 12, 12)))], tiny_model(),
                           TR.TrainConfig(crop_h=12, crop_w=12), extractor32)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TR.TrainConfig(stage1_fraction=1.5)
    with pytest.raises(ConfigError):
        TR.TrainConfig(crop_h=13)
    with pytest.raises(ConfigError):
        TR.TrainConfig(batch_size=0)
