import csv
import shutil
import subprocess
import sys

import numpy as np
import pytest

from fmsr.checkpoint import load_checkpoint, save_checkpoint
from fmsr.cli import main
from fmsr.data import load_image, save_image, synthetic_image
from fmsr.model import ModelConfig, build_model
from fmsr.toy import TOY_CONFIG
from fmsr.training import make_checkpoint

TINY_KV = """# tiny run
groups=1
blocks=1
channels=8
d_state=4
reduction=4
total_epochs=2
halve_every=1
steps_per_epoch=2
batch=2
patch=8
"""


@pytest.fixture
def toy_ckpt(tmp_path):
    path = tmp_path / "toy.fmsr"
    save_checkpoint(path, make_checkpoint(build_model(TOY_CONFIG, seed=0)))
    return str(path)


@pytest.fixture
def lr_png(tmp_path):
    path = tmp_path / "lr.png"
    save_image(synthetic_image(32, seed=4), path)
    return str(path)


@pytest.fixture
def dataset(tmp_path):
    folder = tmp_path / "hr"
    folder.mkdir()
    for i in range(2):
        save_image(synthetic_image(48, seed=i), folder / f"{i}.png")
    manifest = tmp_path / "train.txt"
    manifest.write_text("hr/0.png\nhr/1.png\n")
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_KV)
    return folder, str(manifest), str(cfg)


# ---- usage ---------------------------------------------------------------------------


def test_selftest_exits_zero(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 14


def test_missing_required_flag_is_usage_error(capsys, tmp_path):
    assert main(["sr", "--input", "a.png", "--output", str(tmp_path / "b.png")]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "--ckpt" in err


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["bench", "--out", "x.csv", "--bogus"]])
def test_bad_command_lines_exit_two(argv, capsys):
    assert main(argv) == 2
    assert "usage:" in capsys.readouterr().err


def test_invalid_thread_count(monkeypatch, toy_ckpt, lr_png, tmp_path):
    monkeypatch.setenv("FMSR_THREADS", "zero")
    assert main(["sr", "--ckpt", toy_ckpt, "--input", lr_png, "--output", str(tmp_path / "o.png")]) == 2


def test_console_script_installed():
    exe = shutil.which("fmsr")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run([exe, "sr"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage:" in proc.stderr


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fmsr.cli", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2


# ---- sr ------------------------------------------------------------------------------------


def test_sr_output_size(toy_ckpt, lr_png, tmp_path):
    out = tmp_path / "sr.png"
    assert main(["sr", "--ckpt", toy_ckpt, "--input", lr_png, "--output", str(out)]) == 0
    assert load_image(out).shape == (128, 128, 3)


def test_sr_is_idempotent(toy_ckpt, lr_png, tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    for out in (a, b):
        assert main(["sr", "--ckpt", toy_ckpt, "--input", lr_png, "--output", str(out), "--self-ensemble"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_sr_missing_input_is_runtime_error(toy_ckpt, tmp_path, capsys):
    assert main(["sr", "--ckpt", toy_ckpt, "--input", str(tmp_path / "none.png"), "--output", str(tmp_path / "o.png")]) == 1
    assert "none.png" in capsys.readouterr().err


def test_sr_corrupt_checkpoint(tmp_path, lr_png, capsys):
    bad = tmp_path / "bad.fmsr"
    bad.write_bytes(b"not a checkpoint")
    assert main(["sr", "--ckpt", str(bad), "--input", lr_png, "--output", str(tmp_path / "o.png")]) == 1


# ---- train ---------------------------------------------------------------------------------


def test_train_writes_outputs_and_flags_win(dataset, tmp_path):
    _, manifest, cfg = dataset
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--data", manifest, "--out", str(out), "--channels", "16",
                 "--lr0", "2e-4"]) == 0
    ckpt = load_checkpoint(out / "final.fmsr")
    assert ckpt.config["channels"] == "16" and ckpt.config["lr0"] == "0.0002"
    assert ckpt.config["groups"] == "1" and ckpt.config["step"] == "4"
    rows = list(csv.reader(open(out / "loss.csv")))
    assert rows[0] == ["step", "epoch", "lr", "loss"] and len(rows) == 5


def test_train_is_idempotent(dataset, tmp_path):
    _, manifest, cfg = dataset
    for name in ("r1", "r2"):
        assert main(["train", "--config", cfg, "--data", manifest, "--out", str(tmp_path / name)]) == 0
    for f in ("final.fmsr", "loss.csv"):
        assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()


def test_train_unknown_config_key(dataset, tmp_path, capsys):
    _, manifest, _ = dataset
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(TINY_KV + "wings=2\n")
    assert main(["train", "--config", str(cfg), "--data", manifest, "--out", str(tmp_path / "o")]) == 2
    assert "wings" in capsys.readouterr().err


def test_train_bad_value(dataset, tmp_path):
    _, manifest, cfg = dataset
    assert main(["train", "--config", cfg, "--data", manifest, "--out", str(tmp_path / "o"), "--batch", "two"]) == 2
    assert main(["train", "--config", cfg, "--data", manifest, "--out", str(tmp_path / "o"), "--reduction", "3"]) == 2


def test_train_malformed_config_line(dataset, tmp_path):
    _, manifest, _ = dataset
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("channels 8\n")
    assert main(["train", "--config", str(cfg), "--data", manifest, "--out", str(tmp_path / "o")]) == 2


def test_config_values_roundtrip_through_checkpoint(dataset, tmp_path):
    from fmsr.config import build_config
    from fmsr.training import TrainConfig

    _, manifest, cfg = dataset
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--data", manifest, "--out", str(out)]) == 0
    echo = load_checkpoint(out / "final.fmsr").config
    mcfg = build_config(ModelConfig, echo, strict=False)
    tcfg = build_config(TrainConfig, echo, strict=False)
    assert (mcfg.channels, mcfg.groups, tcfg.patch, tcfg.halve_every) == (8, 1, 8, 1)


# ---- eval / erf / bench ---------------------------------------------------------------------


def test_eval_writes_csv(toy_ckpt, dataset, tmp_path, capsys):
    folder, _, _ = dataset
    out = tmp_path / "eval.csv"
    assert main(["eval", "--ckpt", toy_ckpt, "--hr-dir", str(folder), "--scale", "4", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert [r[0] for r in rows[1:]] == ["0.png", "1.png", "mean"]
    assert "PSNR" in capsys.readouterr().out


def test_eval_scale_mismatch(toy_ckpt, dataset, tmp_path):
    folder, _, _ = dataset
    assert main(["eval", "--ckpt", toy_ckpt, "--hr-dir", str(folder), "--scale", "2", "--out", str(tmp_path / "e.csv")]) == 2


def test_erf_outputs(toy_ckpt, lr_png, tmp_path):
    out = tmp_path / "erf.png"
    assert main(["erf", "--ckpt", toy_ckpt, "--input", lr_png, "--out", str(out), "--log"]) == 0
    assert load_image(out).shape == (32, 32, 3)
    raw = np.load(tmp_path / "erf.npy")
    assert raw.shape == (32, 32) and (raw[[0, 0, -1, -1], [0, -1, 0, -1]] > 0).all()


def test_bench_small(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bench", "--sizes", "8,12", "--repeats", "1", "--fmsr-c", "16", "--msa-dim", "24", "--out", str(out)]) == 0
    assert open(out).readline().strip() == "size,block,params,flops,time_ms"
    assert "p(fmb)" in capsys.readouterr().out


@pytest.mark.parametrize("sizes", ["8", "8,x"])
def test_bench_bad_sizes(sizes, tmp_path):
    assert main(["bench", "--sizes", sizes, "--out", str(tmp_path / "b.csv")]) == 2
