import numpy as np
import pytest

from urcsa import tensor as T
from urcsa.errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
)
from urcsa.network import (
    ModelConfig,
    URCSANet,
    config_from_text,
    config_to_text,
    load_into_model,
    load_model,
    save_model,
)
from urcsa.tensor import Tensor


def rand_img(shape, seed=0):
    return np.random.default_rng(seed).random(shape)


def small_config(**overrides):
    base = dict(base_channels=4, n_blocks=3, seed=0)
    base.update(overrides)
    return ModelConfig(**base)


def rcsa_param_formula(c_in, c_out):
    # Four branches of three projection matrices, the per-channel gate, and
    # the 1x1 output projection.
    return 12 * c_in * c_in + c_in + (c_in * c_out + c_out)


class TestConfig:
    def test_block_count_range(self):
        with pytest.raises(ConfigError):
            ModelConfig(n_blocks=5)
        with pytest.raises(ConfigError):
            ModelConfig(n_blocks=0)

    def test_round_trip_text(self):
        cfg = small_config(rcsa_branch="avg_only", improved_unet=False, seed=7)
        assert config_from_text(config_to_text(cfg)) == cfg

    def test_bad_branch(self):
        with pytest.raises(ConfigError):
            ModelConfig(rcsa_branch="mean_only")


class TestBlocks:
    def test_without_rcsa_is_unet_plus_residual(self):
        model = URCSANet(small_config(use_rcsa=False), dtype=np.float64)
        x = Tensor(rand_img((4, 8, 8), 1))
        out = model.block_forward(x)
        expected = model.unet.forward(x).data + x.data
        assert np.allclose(out.data, expected, atol=1e-12)

    def test_block_preserves_shape(self):
        model = URCSANet(small_config(base_channels=8), dtype=np.float64)
        out = model.block_forward(Tensor(rand_img((8, 16, 16), 2)))
        assert out.shape == (8, 16, 16)

    def test_rcsa_u_ordering_runs_and_differs(self):
        x = rand_img((4, 8, 8), 3)
        a = URCSANet(small_config(), dtype=np.float64)
        b = URCSANet(small_config(ordering="rcsa-u"), dtype=np.float64)
        out_a = a.block_forward(Tensor(x))
        out_b = b.block_forward(Tensor(x))
        assert out_a.shape == out_b.shape == (4, 8, 8)
        assert np.any(out_a.data != out_b.data)

    def test_block_gradient_check(self):
        model = URCSANet(small_config(), dtype=np.float64)

        def f(x):
            return T.mean_all(T.square(model.block_forward(x)))

        assert T.grad_check(f, Tensor(rand_img((4, 8, 8), 4) - 0.5)) < 1e-5


class TestNetworkForward:
    def test_shared_parameters_across_block_counts(self):
        counts = {n: URCSANet(small_config(n_blocks=n)).param_count() for n in (1, 2, 3, 4)}
        assert len(set(counts.values())) == 1

    def test_mutating_shared_weight_changes_every_pass(self):
        model = URCSANet(small_config(n_blocks=3), dtype=np.float64)
        x = Tensor(rand_img((3, 8, 8), 5))
        before = []
        model.forward(x, block_outputs=before)
        model.unet.enc0.w1.data += 0.05
        after = []
        model.forward(x, block_outputs=after)
        assert len(before) == 3
        for b, a in zip(before, after):
            assert np.any(b.data != a.data)

    def test_rcsa_parameter_delta_closed_form(self):
        c = 4
        with_rcsa = URCSANet(small_config(base_channels=c)).param_count()
        without = URCSANet(small_config(base_channels=c, use_rcsa=False)).param_count()
        assert with_rcsa - without == rcsa_param_formula(2 * c, c)

    @pytest.mark.parametrize("h,w", [(16, 16), (32, 24), (64, 48)])
    def test_any_divisible_size(self, h, w):
        model = URCSANet(small_config())
        out = model.forward(Tensor(rand_img((3, h, w), 6).astype(np.float32)))
        assert out.shape == (3, h, w)

    def test_deterministic_output(self):
        x = rand_img((3, 8, 8), 7)
        a = URCSANet(small_config(seed=3), dtype=np.float64).forward(Tensor(x))
        b = URCSANet(small_config(seed=3), dtype=np.float64).forward(Tensor(x))
        assert np.array_equal(a.data, b.data)

    def test_deterministic_init(self):
        a = URCSANet(small_config(seed=9))
        b = URCSANet(small_config(seed=9))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.data, pb.data)

    def test_full_network_gradient_check(self):
        model = URCSANet(small_config(n_blocks=2), dtype=np.float64)

        def f(x):
            return T.mean_all(T.square(model.forward(x)))

        assert T.grad_check(f, Tensor(rand_img((3, 8, 8), 8))) < 1e-4

    def test_enhance_returns_original_size_and_range(self):
        model = URCSANet(small_config())
        out = model.enhance(rand_img((3, 5, 7), 9))
        assert out.shape == (3, 5, 7)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_enhance_any_size_sweep(self):
        model = URCSANet(small_config(n_blocks=1))
        rng = np.random.default_rng(10)
        for _ in range(6):
            h, w = int(rng.integers(1, 65)), int(rng.integers(1, 65))
            assert model.enhance(rng.random((3, h, w))).shape == (3, h, w)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = URCSANet(small_config(seed=11))
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        loaded = load_model(path)
        for p, q in zip(model.parameters(), loaded.parameters()):
            assert p.name == q.name
            assert np.array_equal(p.data, q.data)

    def test_save_load_save_identical_bytes(self, tmp_path):
        model = URCSANet(small_config(seed=12))
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_model(model, p1)
        save_model(load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupt_magic(self, tmp_path):
        model = URCSANet(small_config())
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"JUNK"
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError):
            load_model(path)

    def test_version_mismatch(self, tmp_path):
        model = URCSANet(small_config())
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointVersionError):
            load_model(path)

    def test_truncated_file(self, tmp_path):
        model = URCSANet(small_config())
        path = tmp_path / "m.ckpt"
        save_model(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointTruncatedError):
            load_model(path)

    def test_mismatched_width_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(URCSANet(small_config(base_channels=4)), path)
        target = URCSANet(small_config(base_channels=8))
        with pytest.raises(CheckpointShapeError):
            load_into_model(target, path)

    def test_load_into_matching_model(self, tmp_path):
        src = URCSANet(small_config(seed=13))
        path = tmp_path / "m.ckpt"
        save_model(src, path)
        dst = URCSANet(small_config(seed=14))
        load_into_model(dst, path)
        for p, q in zip(src.parameters(), dst.parameters()):
            assert np.array_equal(p.data, q.data)
