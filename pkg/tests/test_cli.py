import csv
import importlib
import subprocess
import sys

import numpy as np
import pytest

from specklebench.cli import COMMANDS, EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE, main, read_config
from specklebench.imgprep import load_image, read_manifest, save_image
from specklebench.metrics import render_slanted_edge

gtrain = importlib.import_module("specklebench.gan.train")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--generate", "6", "--size", "32", "--realizations", "2", "--contrast", "0.6",
                 "--out", str(root / "raw"), "--seed", "3"]) == 0
    assert main(["prep", "--dataroot", str(root / "raw"), "--out", str(root / "data"), "--test-fraction", "0.3"]) == 0
    return root


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synth_and_prep_layout(dataset):
    raw = sorted(p.name for p in (dataset / "raw").iterdir())
    assert raw[:2] == ["scene000_00.png", "scene000_01.png"] and len(raw) == 12
    assert load_image(dataset / "raw" / raw[0]).shape == (32, 64, 3)
    entries = read_manifest(dataset / "data" / "manifest.csv")
    assert {e.split for e in entries} == {"train", "test"}
    by_group = {}
    for e in entries:
        by_group.setdefault(e.group_id, set()).add(e.split)
    assert all(len(s) == 1 for s in by_group.values())


def test_bench_is_byte_identical(dataset, tmp_path):
    argv = ["bench", "--dataroot", str(dataset / "data"), "--methods", "median,nlm", "--nlm-params",
            "patch_radius=1,window_radius=2"]
    assert main(argv + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b.csv")]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    rows = _rows(tmp_path / "a.csv")
    assert [r[0] for r in rows] == ["method", "speckled_input", "median", "nlm"]
    assert main(["report", "--input", str(tmp_path / "a.csv"), "--out", str(tmp_path / "a.md")]) == 0
    assert (tmp_path / "a.md").read_text().startswith("| Method")


def test_denoise_and_eval(dataset, tmp_path):
    assert main(["denoise", "--method", "median", "--params", "kernel=3", "--paired",
                 "--input", str(dataset / "raw"), "--out", str(tmp_path / "den")]) == 0
    assert len(list((tmp_path / "den").iterdir())) == 12
    assert main(["eval", "--pred", str(dataset / "raw"), "--out", str(tmp_path / "e.csv")]) == 0
    rows = _rows(tmp_path / "e.csv")
    assert rows[0] == ["file", "psnr_db", "ssim"] and len(rows) == 13


def test_train_then_infer_and_bench(dataset, tmp_path):
    assert main(["train", "--dataroot", str(dataset / "data"), "--name", "t", "--checkpoints-dir", str(tmp_path),
                 "--niter", "1", "--niter-decay", "0", "--load-size", "32", "--fine-size", "32", "--depth", "2",
                 "--base-channels", "4", "--d-layers", "1", "--d-base-channels", "4"]) == 0
    ckpt = tmp_path / "t" / "latest.ckpt"
    log = _rows(tmp_path / "t" / "loss_log.csv")
    assert log[0] == ["epoch", "lr", "loss_g_gan", "loss_g_l1", "loss_d", "val_psnr"] and len(log) == 2
    assert log[1][5] != ""  # manifest test split doubles as validation
    assert main(["infer", "--checkpoint", str(ckpt), "--paired", "--input", str(dataset / "raw"),
                 "--out", str(tmp_path / "inf")]) == 0
    assert load_image(tmp_path / "inf" / "scene000_00.png").shape == (32, 32, 3)
    assert main(["bench", "--dataroot", str(dataset / "data"), "--methods", "deeplsr", "--checkpoint", str(ckpt),
                 "--out", str(tmp_path / "d.csv")]) == 0
    assert _rows(tmp_path / "d.csv")[2][0] == "deeplsr"


def test_tune_outputs_front(dataset, tmp_path):
    assert main(["tune", "--method", "median", "--grid", "kernel=3|5", "--dataroot", str(dataset / "data"),
                 "--out", str(tmp_path / "t.csv")]) == 0
    rows = _rows(tmp_path / "t.csv")
    assert rows[0] == ["params", "psnr_db", "ssim", "pareto", "knee"]
    assert sum(int(r[4]) for r in rows[1:]) == 1


def test_mtf_command(tmp_path, capsys):
    save_image(render_slanted_edge(96, 5.0, 2.0), tmp_path / "edge.png")
    assert main(["mtf", "--roi", str(tmp_path / "edge.png"), "--out", str(tmp_path / "m.csv")]) == 0
    assert "mtf50=" in capsys.readouterr().err
    rows = _rows(tmp_path / "m.csv")
    assert rows[0] == ["freq_cyc_per_px", "modulus"] and float(rows[1][1]) == 1.0


def test_usage_errors_exit_1(dataset, tmp_path):
    assert main([]) == EXIT_USAGE == 1
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["denoise", "--method", "median", "--params", "kernel=4", "--input", str(dataset / "raw"),
                 "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert main(["synth", "--out", str(tmp_path / "s")]) == EXIT_USAGE


def test_data_errors_exit_2(tmp_path):
    assert main(["bench", "--dataroot", str(tmp_path / "missing"), "--out", str(tmp_path / "r.csv")]) == EXIT_DATA == 2
    (tmp_path / "junk").mkdir()
    (tmp_path / "junk" / "a_00.png").write_bytes(b"nope")
    assert main(["bench", "--dataroot", str(tmp_path / "junk"), "--out", str(tmp_path / "r.csv")]) == EXIT_DATA
    assert main(["infer", "--checkpoint", str(tmp_path / "none.ckpt"), "--input", str(tmp_path),
                 "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_numerical_fault_exit_3(dataset, tmp_path, monkeypatch):
    real_l1 = gtrain.l1_loss

    def poisoned(pred, target):
        out = real_l1(pred, target)
        out.data = np.array(np.nan, dtype=out.data.dtype)
        return out

    monkeypatch.setattr(gtrain, "l1_loss", poisoned)
    rc = main(["train", "--dataroot", str(dataset / "data"), "--name", "nan", "--checkpoints-dir", str(tmp_path),
               "--niter", "1", "--niter-decay", "0", "--load-size", "32", "--fine-size", "32", "--depth", "2",
               "--base-channels", "4", "--d-layers", "1", "--d-base-channels", "4"])
    assert rc == EXIT_NUMERIC == 3
    assert (tmp_path / "nan" / "last_good.ckpt").is_file()


def test_config_file_with_cli_override(dataset, tmp_path):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(f"# bench settings\ndataroot = {dataset / 'data'}\nmethods = median\n"
                   f"median-params = kernel=5\nfixed-noise = true\ntiming = false\n")
    assert read_config(cfg) == ["--dataroot", str(dataset / "data"), "--methods", "median",
                                "--median-params", "kernel=5", "--fixed-noise"]
    assert main(["bench", "--config", str(cfg), "--median-params", "kernel=3", "--out", str(tmp_path / "r.csv")]) == 0
    assert _rows(tmp_path / "r.csv")[2][1] == "kernel=3"
    assert main(["bench", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "r.csv")]) == EXIT_DATA


def test_every_subcommand_has_help():
    for cmd in COMMANDS:
        res = subprocess.run([sys.executable, "-m", "specklebench.cli", cmd, "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "--config" in res.stdout
