import json
import math

import numpy as np
import pandas as pd
import pytest

from app.core.dan.network import init_parameters
from app.core.degradation.pipeline import degrade_blurry
from app.core.degradation.presets import sample_degradation
from app.core.degradation.theta_codec import encode_theta, null_theta
from app.core.errors import ParameterDomainError, ShapeMismatchError
from app.core.kernels import kernel_from_spec, pulse_kernel, synth_gaussian_kernel
from app.core.metrics.evaluation import (
    aggregate_rows,
    evaluate,
    reflect_pad_to_multiple,
    super_resolve,
    write_report,
)
from app.core.metrics.kernel_metrics import kernel_from_theta, kernel_mse, kernel_triptych, lr_psnr, pad_kernel
from app.core.metrics.quality import psnr, rgb_to_y, shave, ssim
from app.core.training.checkpoint import Checkpoint
from app.schemas.report import ImageMetrics
from app.schemas.training import TrainConfig
from app.utils.image_io import dequantize_8bit, quantize_8bit


def naive_ssim(a, b):
    axis = np.arange(-5, 6)
    g = np.exp(-(axis ** 2) / (2 * 1.5 ** 2))
    window = np.outer(g, g)
    window /= window.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    values = []
    for i in range(5, a.shape[0] - 5):
        for j in range(5, a.shape[1] - 5):
            pa, pb = a[i - 5:i + 6, j - 5:j + 6], b[i - 5:i + 6, j - 5:j + 6]
            mu_a, mu_b = np.sum(window * pa), np.sum(window * pb)
            var_a = np.sum(window * pa * pa) - mu_a ** 2
            var_b = np.sum(window * pb * pb) - mu_b ** 2
            cov = np.sum(window * pa * pb) - mu_a * mu_b
            values.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(values))


def test_studio_swing_luma_endpoints():
    assert rgb_to_y(np.zeros((3, 2, 2)))[0, 0] == pytest.approx(16 / 255)
    assert rgb_to_y(np.ones((3, 2, 2)))[0, 0] == pytest.approx(235 / 255)
    assert rgb_to_y(np.ones((3, 2, 2)), "full")[0, 0] == pytest.approx(1.0)
    gray = np.full((1, 2, 2), 0.3)
    np.testing.assert_array_equal(rgb_to_y(gray), gray[0])
    with pytest.raises(ParameterDomainError):
        rgb_to_y(np.ones((3, 2, 2)), "hdr")


def test_psnr_of_one_level_error():
    a = np.full((3, 8, 8), 0.5)
    assert psnr(a + 1 / 255, a, y_channel=False) == pytest.approx(20 * math.log10(255), abs=1e-9)
    assert psnr(a, a) == math.inf


def test_psnr_shave_and_shape_checks():
    a = np.zeros((3, 10, 10))
    b = a.copy()
    b[:, 0, :] = 1.0
    assert psnr(a, b, border=1) == math.inf
    assert shave(a, 2).shape == (3, 6, 6)
    with pytest.raises(ShapeMismatchError):
        shave(a, 5)
    with pytest.raises(ShapeMismatchError):
        psnr(a, np.zeros((3, 10, 9)))


def test_ssim_matches_windowed_definition(rng):
    a = rng.random((20, 22))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert ssim(a, b, y_channel=False) == pytest.approx(naive_ssim(a, b), abs=1e-6)


def test_ssim_bounds(rng):
    a = rng.random((3, 16, 16))
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, 1.0 - a) < 0.5
    with pytest.raises(ShapeMismatchError):
        ssim(np.zeros((3, 10, 10)), np.zeros((3, 10, 10)))


def test_kernel_mse_example():
    uniform = np.full((3, 3), 1 / 9)
    assert kernel_mse(pulse_kernel(3), uniform) == pytest.approx(8 / 81)
    assert kernel_mse(pulse_kernel(3), pulse_kernel(5)) == 0.0
    assert pad_kernel(pulse_kernel(1), 5).shape == (5, 5)
    with pytest.raises(ShapeMismatchError):
        pad_kernel(pulse_kernel(3), 4)


def test_kernel_triptych():
    gt, pred, diff = kernel_triptych(pulse_kernel(3), np.full((5, 5), 1 / 25))
    assert gt.shape == pred.shape == diff.shape == (5, 5)
    assert diff[2, 2] == pytest.approx(1 - 1 / 25)


def test_kernel_from_theta_is_noise_free(rng):
    params = sample_degradation("blurry_x2", rng)
    np.testing.assert_allclose(kernel_from_theta(encode_theta(params), 2), kernel_from_spec(params.stage1.blur), atol=1e-9)
    np.testing.assert_array_equal(kernel_from_theta(null_theta()), pulse_kernel(1))


def test_lr_psnr_peaks_at_true_kernel(rng):
    hr = rng.random((3, 32, 32))
    truth = synth_gaussian_kernel(1.0, 1.0, 0.0, 1.0, 11)
    lr = degrade_blurry(hr, truth, 2)
    assert lr_psnr(hr, lr, truth, 2) == math.inf
    scores = [lr_psnr(hr, lr, synth_gaussian_kernel(sigma, sigma, 0.0, 1.0, 11), 2) for sigma in (1.5, 2.5, 4.0)]
    assert scores[0] > scores[1] > scores[2]
    stored = dequantize_8bit(quantize_8bit(lr))
    assert lr_psnr(hr, stored, truth, 2, quantize=True) == math.inf


def test_reflect_pad_and_super_resolve_shapes(tiny_config, rng):
    image = rng.random((3, 10, 13))
    padded = reflect_pad_to_multiple(image, 4)
    assert padded.shape == (3, 12, 16)
    np.testing.assert_array_equal(padded[:, :10, :13], image)
    aligned = image[:, :8, :12]
    assert reflect_pad_to_multiple(aligned, 4) is aligned

    network = Checkpoint(config=tiny_config, train_config=TrainConfig(), params=init_parameters(tiny_config)).network()
    sr, theta = super_resolve(network, image)
    assert sr.shape == (3, 20, 26) and theta.shape == (36,)
    assert sr.min() >= 0.0 and sr.max() <= 1.0


def test_aggregate_rows_skips_missing_values():
    rows = [
        ImageMetrics(id="a", psnr=30.0, ssim=0.9, theta_mse=0.1, kernel_mse=0.01),
        ImageMetrics(id="b", psnr=32.0, ssim=0.8, theta_mse=0.3),
    ]
    summary = aggregate_rows(rows)
    assert summary["psnr"].mean == pytest.approx(31.0) and summary["psnr"].std == pytest.approx(1.0)
    assert summary["kernel_mse"].count == 1
    assert "lr_psnr" not in summary


@pytest.fixture
def untrained_checkpoint(tiny_config, tiny_train_config, blurry_dataset):
    return Checkpoint(
        config=tiny_config,
        train_config=tiny_train_config,
        params=init_parameters(tiny_config, 1),
        theta_mean=blurry_dataset.theta_mean(),
    )


def test_evaluation_rows_and_aggregates(blurry_dataset, untrained_checkpoint, tmp_path):
    report = evaluate(blurry_dataset, untrained_checkpoint, kernel_dir=tmp_path / "kernels")
    assert [row.id for row in report.rows] == blurry_dataset.ids
    assert report.iterations == 2 and report.y_range == "studio"
    assert report.aggregates["psnr"].count == 3
    assert report.aggregates["psnr"].mean == pytest.approx(np.mean([row.psnr for row in report.rows]))
    for row in report.rows:
        assert row.kernel_mse is not None and row.lr_psnr is not None
        assert row.baseline_theta_mse is not None and row.bicubic_psnr is not None
    assert len(list((tmp_path / "kernels").glob("*.pgm"))) == 9


def test_evaluation_is_thread_independent(blurry_dataset, untrained_checkpoint):
    single = evaluate(blurry_dataset, untrained_checkpoint, threads=1)
    pooled = evaluate(blurry_dataset, untrained_checkpoint, threads=3)
    assert [row.model_dump() for row in single.rows] == [row.model_dump() for row in pooled.rows]


def test_evaluation_options(blurry_dataset, untrained_checkpoint):
    report = evaluate(blurry_dataset, untrained_checkpoint, use_gt_degradation=True, iterations=1, border=2, y_range="full")
    assert report.use_gt_degradation and report.iterations == 1 and report.shave == 2
    bad = Checkpoint(
        config=untrained_checkpoint.config.model_copy(update={"sr_scale": 4}),
        train_config=untrained_checkpoint.train_config,
        params=untrained_checkpoint.params,
    )
    with pytest.raises(ParameterDomainError):
        evaluate(blurry_dataset, bad)


def test_write_report(blurry_dataset, untrained_checkpoint, tmp_path):
    report = evaluate(blurry_dataset, untrained_checkpoint)
    write_report(report, tmp_path / "report.json", tmp_path / "report.csv")
    record = json.loads((tmp_path / "report.json").read_text())
    assert len(record["rows"]) == 3 and "psnr" in record["aggregates"]
    frame = pd.read_csv(tmp_path / "report.csv")
    assert frame["id"].astype(str).str.zfill(5).tolist() == blurry_dataset.ids
