import json

import numpy as np
import pytest

from urcsa.cli import main
from urcsa.network import ModelConfig, URCSANet, save_model
from urcsa.png_io import load_png, save_png

from test_io import write_image_dataset, write_video_dataset


@pytest.fixture(scope="module")
def tiny_ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "tiny.ckpt"
    save_model(URCSANet(ModelConfig(base_channels=4, n_blocks=1, seed=0)), path)
    return path


class TestEnhance:
    def test_three_images_names_preserved(self, tmp_path, tiny_ckpt):
        rng = np.random.default_rng(0)
        (tmp_path / "in").mkdir()
        names = ["x.png", "y.png", "z.png"]
        for name in names:
            save_png(rng.random((3, 12, 10)), tmp_path / "in" / name)
        code = main(["enhance", "--model", str(tiny_ckpt),
                     "--input", str(tmp_path / "in"),
                     "--output", str(tmp_path / "out")])
        assert code == 0
        for name in names:
            out = load_png(tmp_path / "out" / name)
            assert out.shape == (3, 12, 10)

    @pytest.mark.parametrize("h,w", [(1, 1), (5, 7), (17, 3)])
    def test_arbitrary_sizes_round_trip(self, tmp_path, tiny_ckpt, h, w):
        (tmp_path / "in").mkdir()
        save_png(np.random.default_rng(1).random((3, h, w)), tmp_path / "in" / "a.png")
        code = main(["enhance", "--model", str(tiny_ckpt),
                     "--input", str(tmp_path / "in"),
                     "--output", str(tmp_path / "out")])
        assert code == 0
        assert load_png(tmp_path / "out" / "a.png").shape == (3, h, w)

    def test_noise_is_seed_deterministic(self, tmp_path, tiny_ckpt):
        (tmp_path / "in").mkdir()
        save_png(np.random.default_rng(2).random((3, 12, 12)), tmp_path / "in" / "a.png")
        for out in ("o1", "o2"):
            assert main(["enhance", "--model", str(tiny_ckpt),
                         "--input", str(tmp_path / "in"),
                         "--output", str(tmp_path / out),
                         "--noise-sigma", "0.1", "--seed", "5"]) == 0
        a = (tmp_path / "o1" / "a.png").read_bytes()
        b = (tmp_path / "o2" / "a.png").read_bytes()
        assert a == b

    def test_missing_model_is_runtime_error(self, tmp_path, capsys):
        code = main(["enhance", "--model", str(tmp_path / "nope.ckpt"),
                     "--input", str(tmp_path), "--output", str(tmp_path / "o")])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestEval:
    def test_image_report_keys(self, tmp_path, tiny_ckpt, capsys):
        write_image_dataset(tmp_path / "ds", ["a.png", "b.png"], size=(12, 12))
        json_path = tmp_path / "report.json"
        code = main(["eval", "--model", str(tiny_ckpt),
                     "--dataset", str(tmp_path / "ds"),
                     "--json-out", str(json_path)])
        assert code == 0
        text = capsys.readouterr().out
        for key in ("psnr=", "ssim=", "rmse=", "delta_e=", "count="):
            assert key in text
        data = json.loads(json_path.read_text())
        assert data["count"] == 2

    def test_video_report_has_temporal_keys(self, tmp_path, tiny_ckpt, capsys):
        write_video_dataset(tmp_path / "vds", ["s0"], n_frames=2, size=(12, 12))
        code = main(["eval", "--model", str(tiny_ckpt),
                     "--dataset", str(tmp_path / "vds"), "--video"])
        assert code == 0
        text = capsys.readouterr().out
        for key in ("AB=", "MABD=", "TPSNR=", "TSSIM="):
            assert key in text


class TestTrain:
    def test_end_to_end_tiny_run(self, tmp_path, capsys):
        write_image_dataset(tmp_path / "ds", ["a.png", "b.png"], size=(12, 12))
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "base_channels=4\nn_blocks=1\ntotal_epochs=2\ncrop_h=12\ncrop_w=12\n"
            f"train_dir={tmp_path / 'ds'}\nout_dir={tmp_path / 'run'}\n")
        assert main(["train", "--config", str(cfg)]) == 0
        assert (tmp_path / "run" / "best.ckpt").exists()
        assert (tmp_path / "run" / "final.ckpt").exists()
        log_lines = (tmp_path / "run" / "train.log").read_text().strip().splitlines()
        assert len(log_lines) == 2

    def test_video_training_run(self, tmp_path):
        write_video_dataset(tmp_path / "vds", ["s0"], n_frames=2, size=(12, 12))
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "base_channels=4\nn_blocks=1\ntotal_epochs=1\ncrop_h=12\ncrop_w=12\n"
            f"video=true\ntrain_dir={tmp_path / 'vds'}\nout_dir={tmp_path / 'run'}\n")
        assert main(["train", "--config", str(cfg)]) == 0
        log = (tmp_path / "run" / "train.log").read_text()
        assert "ldif=" in log and "lself=" in log

    def test_bad_config_key_fails_cleanly(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("not_a_key=1\n")
        assert main(["train", "--config", str(cfg)]) == 1
        assert "unknown key" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_default_run_passes(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "network: max_rel_err=" in out
        assert "FAIL" not in out

    def test_bad_size_flag(self, capsys):
        assert main(["gradcheck", "--size", "8x8"]) == 1
        assert "error:" in capsys.readouterr().err


def test_bad_subcommand_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_required_flag_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["enhance", "--model", "x.ckpt"])
    assert exc.value.code == 2
