import json

import numpy as np
import pandas as pd
import pytest

from app import cli
from app.core.selfcheck import CheckResult
from app.core.training.checkpoint import load_checkpoint
from app.core.training.dataset import MANIFEST_NAME
from app.core.training.synthetic import synth_hr_image
from app.utils.image_io import read_netpbm, write_netpbm

TINY_NETWORK = {
    "iterations": 2,
    "feature_channels": 4,
    "restorer_blocks": 1,
    "estimator_blocks": 2,
    "theta_feature_dim": 8,
    "tail_theta_hidden": 8,
}


@pytest.fixture
def hr_path(tmp_path):
    path = tmp_path / "hr.ppm"
    write_netpbm(path, synth_hr_image(32, np.random.default_rng(2)))
    return path


@pytest.fixture
def dataset_dir(tmp_path):
    out = tmp_path / "pairs"
    assert cli.main(["dataset", "--preset", "blurry_x2", "--n", "2", "--size", "16", "--seed", "1", "--out-dir", str(out)]) == 0
    return out


@pytest.fixture
def checkpoint_path(tmp_path, dataset_dir):
    config = tmp_path / "train.json"
    config.write_text(json.dumps({"total_steps": 2, "batch": 2, "lr_patch": 8, "log_every": 1, "network": TINY_NETWORK}))
    out = tmp_path / "model.ckpt"
    code = cli.main(["train", "--dataset", str(dataset_dir / MANIFEST_NAME), "--config", str(config), "--out", str(out)])
    assert code == 0
    return out


def test_kernel_command(tmp_path, capsys):
    code = cli.main(["kernel", "--kind", "gaussian", "--size", "11", "--sigma-x", "1.5", "--out", str(tmp_path / "k")])
    assert code == 0
    assert "sum 1.000000" in capsys.readouterr().out
    assert (tmp_path / "k.txt").exists() and (tmp_path / "k.pgm").exists()


def test_kernel_command_usage_errors():
    assert cli.main(["kernel", "--kind", "box"]) == 2
    assert cli.main(["kernel"]) == 2
    assert cli.main(["kernel", "--kind", "gaussian", "--size", "4"]) == 2


def test_degrade_and_replay(hr_path, tmp_path):
    lr_path, record_path = tmp_path / "lr.ppm", tmp_path / "theta.json"
    code = cli.main(
        ["degrade", "--in", str(hr_path), "--preset", "blurry_x2", "--seed", "3", "--out", str(lr_path), "--emit-theta", str(record_path)]
    )
    assert code == 0
    assert read_netpbm(lr_path).shape == (3, 16, 16)
    record = json.loads(record_path.read_text())
    assert record["model"] == "blurry" and record["seed"] == 3 and len(record["theta"]) == 36

    replay_path = tmp_path / "replay.ppm"
    assert cli.main(["degrade", "--in", str(hr_path), "--theta-json", str(record_path), "--out", str(replay_path)]) == 0
    assert replay_path.read_bytes() == lr_path.read_bytes()


def test_degrade_usage_errors(hr_path, tmp_path, capsys):
    out = str(tmp_path / "lr.ppm")
    assert cli.main(["degrade", "--in", str(hr_path), "--out", out]) == 2
    assert cli.main(["degrade", "--in", str(hr_path), "--preset", "blurry_x4", "--scale", "2", "--out", out]) == 2

    broken = tmp_path / "broken.json"
    broken.write_text('{\n  "theta": oops\n}')
    capsys.readouterr()
    assert cli.main(["degrade", "--in", str(hr_path), "--theta-json", str(broken), "--out", out]) == 2
    assert f"{broken}:2:" in capsys.readouterr().err

    assert cli.main(["degrade", "--in", str(tmp_path / "missing.ppm"), "--preset", "blurry_x2", "--out", out]) == 1


def test_dataset_command(dataset_dir):
    manifest = json.loads((dataset_dir / MANIFEST_NAME).read_text())
    assert len(manifest["entries"]) == 2
    assert cli.main(["dataset", "--preset", "blurry_x2", "--n", "2", "--size", "16", "--out-dir", str(dataset_dir)]) == 2
    forced = ["dataset", "--preset", "blurry_x2", "--n", "1", "--size", "16", "--force", "--out-dir", str(dataset_dir)]
    assert cli.main(forced) == 0


def test_train_writes_checkpoint_and_log(checkpoint_path):
    checkpoint = load_checkpoint(checkpoint_path)
    assert checkpoint.step == 2
    assert checkpoint.config.feature_channels == 4 and checkpoint.config.sr_scale == 2
    assert checkpoint_path.with_suffix(".csv").exists()


def _resume_args(dataset_dir, checkpoint_path, config, out):
    return [
        "train", "--dataset", str(dataset_dir / MANIFEST_NAME), "--config", str(config),
        "--resume", str(checkpoint_path), "--out", str(out),
    ]


def test_train_resume_continues_step_counter(checkpoint_path, dataset_dir, tmp_path):
    config = tmp_path / "more.json"
    config.write_text(json.dumps({"total_steps": 4, "batch": 2, "lr_patch": 8, "log_every": 1}))
    out = tmp_path / "resumed.ckpt"
    assert cli.main(_resume_args(dataset_dir, checkpoint_path, config, out)) == 0

    resumed = load_checkpoint(out)
    assert resumed.step == 4
    assert resumed.config == load_checkpoint(checkpoint_path).config
    first_log = pd.read_csv(checkpoint_path.with_suffix(".csv"))
    second_log = pd.read_csv(out.with_suffix(".csv"))
    assert first_log["step"].tolist() == [1, 2]
    assert second_log["step"].tolist() == [3, 4]


def test_train_resume_rejects_conflicting_network(checkpoint_path, dataset_dir, tmp_path, capsys):
    config = tmp_path / "more.json"
    config.write_text(json.dumps({"total_steps": 4, "batch": 2, "lr_patch": 8, "log_every": 1}))
    out = tmp_path / "resumed.ckpt"
    capsys.readouterr()
    assert cli.main(_resume_args(dataset_dir, checkpoint_path, config, out) + ["--channels", "8"]) == 2
    assert "conflict" in capsys.readouterr().err
    assert not out.exists()


def test_train_resume_accepts_matching_network(checkpoint_path, dataset_dir, tmp_path):
    out = tmp_path / "resumed.ckpt"
    args = _resume_args(dataset_dir, checkpoint_path, tmp_path / "train.json", out) + ["--steps", "3"]
    assert cli.main(args + ["--channels", str(TINY_NETWORK["feature_channels"])]) == 0
    assert load_checkpoint(out).step == 3


def test_eval_command(checkpoint_path, dataset_dir, tmp_path, capsys):
    report, table = tmp_path / "report.json", tmp_path / "report.csv"
    args = ["eval", "--dataset", str(dataset_dir / MANIFEST_NAME), "--ckpt", str(checkpoint_path), "--report", str(report)]
    capsys.readouterr()
    assert cli.main(args + ["--csv", str(table), "--iters", "1"]) == 0
    assert "psnr" in capsys.readouterr().out
    record = json.loads(report.read_text())
    assert record["iterations"] == 1 and len(record["rows"]) == 2
    assert table.exists()


def test_eval_missing_checkpoint(dataset_dir, tmp_path):
    args = ["eval", "--dataset", str(dataset_dir / MANIFEST_NAME), "--ckpt", str(tmp_path / "none.ckpt")]
    assert cli.main(args + ["--report", str(tmp_path / "r.json")]) == 1


def test_estimate_command(checkpoint_path, tmp_path):
    lr_path = tmp_path / "lr.ppm"
    write_netpbm(lr_path, np.random.default_rng(0).random((3, 10, 9)))
    out, kernel, sr = tmp_path / "est.json", tmp_path / "k.pgm", tmp_path / "sr.ppm"
    args = ["estimate", "--in", str(lr_path), "--ckpt", str(checkpoint_path), "--out", str(out)]
    assert cli.main(args + ["--kernel-pgm", str(kernel), "--sr-out", str(sr)]) == 0
    record = json.loads(out.read_text())
    assert len(record["theta"]) == 36 and record["params"] is not None
    assert read_netpbm(sr).shape == (3, 20, 18)
    assert kernel.exists()


def test_calibrate_command(checkpoint_path, dataset_dir, tmp_path):
    out = tmp_path / "calibrated.ckpt"
    args = ["calibrate", "--dataset", str(dataset_dir / MANIFEST_NAME), "--ckpt", str(checkpoint_path), "--out", str(out)]
    assert cli.main(args + ["--steps", "1"]) == 0
    assert load_checkpoint(out).config.calibrated_tails


def test_info_command(checkpoint_path, tmp_path, capsys):
    capsys.readouterr()
    assert cli.main(["info", "--ckpt", str(checkpoint_path), "--lr-size", "8", "8"]) == 0
    from_checkpoint = json.loads(capsys.readouterr().out)

    config = tmp_path / "network.json"
    config.write_text(json.dumps({**TINY_NETWORK, "sr_scale": 2}))
    assert cli.main(["info", "--config", str(config), "--lr-size", "8", "8"]) == 0
    from_config = json.loads(capsys.readouterr().out)
    assert from_checkpoint["parameters"] == from_config["parameters"] > 0


def test_selfcheck_exit_codes(mocker, capsys):
    mocker.patch("app.cli.run_selfcheck", return_value=[CheckResult("grad stub", 0.0, 1e-4)])
    assert cli.main(["selfcheck"]) == 0
    assert "PASS" in capsys.readouterr().out
    mocker.patch("app.cli.run_selfcheck", return_value=[CheckResult("grad stub", 1.0, 1e-4)])
    assert cli.main(["selfcheck"]) == 1
