"""
Evaluation of a checkpoint on a dataset manifest.

Each LR image is reflect-padded to a multiple of the Estimator's pooling
factor, super-resolved in one pass, cropped back and clamped to [0, 1].
Rows come out in manifest order whatever the thread count.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.core.autodiff.tensor import no_grad
from app.core.dan.network import DanNetwork
from app.core.degradation.resize import resize_to_shape
from app.core.errors import ParameterDomainError
from app.core.kernels import pulse_kernel
from app.core.metrics.kernel_metrics import kernel_from_theta, kernel_mse, kernel_triptych, lr_psnr
from app.core.metrics.quality import YRange, psnr, ssim
from app.core.training.checkpoint import Checkpoint, load_checkpoint
from app.core.training.dataset import PairDataset, load_pairs
from app.schemas.report import EvalReport, ImageMetrics, MetricSummary
from app.utils.image_io import write_kernel_pgm

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
METRIC_FIELDS = ("psnr", "ssim", "theta_mse", "kernel_mse", "lr_psnr", "bicubic_psnr", "baseline_theta_mse")


def reflect_pad_to_multiple(image: np.ndarray, multiple: int) -> np.ndarray:
    """Reflect-pad the bottom and right edges of (C, H, W) up to multiples of `multiple`."""
    _, height, width = image.shape
    pad_h, pad_w = -height % multiple, -width % multiple
    if pad_h == 0 and pad_w == 0:
        return image
    return np.pad(image, ((0, 0), (0, pad_h), (0, pad_w)), mode="reflect")


def super_resolve(
    network: DanNetwork,
    lr: np.ndarray,
    gt_theta: Optional[np.ndarray] = None,
    iterations: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Super-resolve one full (3, H, W) LR image.

    Returns:
        (sr, theta_hat): the clamped (3, sH, sW) float64 SR image and the (36,) estimate
    """
    config = network.config
    _, height, width = lr.shape
    padded = reflect_pad_to_multiple(np.asarray(lr, dtype=np.float64), config.min_input_size)
    with no_grad():
        out = network.forward(padded[None], gt_theta=gt_theta, iterations=iterations)
    s = config.sr_scale
    sr = np.clip(out.sr.data[0, :, : height * s, : width * s].astype(np.float64), 0.0, 1.0)
    return sr, out.theta.data[0].astype(np.float64)


def _image_metrics(
    index: int,
    dataset: PairDataset,
    network: DanNetwork,
    checkpoint: Checkpoint,
    use_gt_degradation: bool,
    iterations: Optional[int],
    border: int,
    y_range: YRange,
    kernel_dir: Optional[Path],
) -> ImageMetrics:
    entry_id = dataset.ids[index]
    lr, hr, theta_gt = dataset.lr[index], dataset.hr[index], dataset.theta[index]
    s = dataset.scale
    sr, theta_hat = super_resolve(network, lr, theta_gt if use_gt_degradation else None, iterations)

    _, height, width = hr.shape
    bicubic = np.clip(resize_to_shape(lr, height, width, "bicubic"), 0.0, 1.0)
    row = ImageMetrics(
        id=entry_id,
        psnr=psnr(sr, hr, y_range=y_range, border=border),
        ssim=ssim(sr, hr, y_range=y_range, border=border),
        theta_mse=float(np.mean((theta_hat - theta_gt) ** 2)),
        bicubic_psnr=psnr(bicubic, hr, y_range=y_range, border=border),
    )
    if checkpoint.theta_mean is not None:
        row.baseline_theta_mse = float(np.mean((checkpoint.theta_mean - theta_gt) ** 2))

    if dataset.manifest.degradation_model == "blurry":
        k_gt = dataset.kernel(index)
        k_gt = pulse_kernel(1) if k_gt is None else k_gt
        k_hat = kernel_from_theta(theta_hat, s)
        row.kernel_mse = kernel_mse(k_hat, k_gt)
        row.lr_psnr = lr_psnr(hr, lr, k_hat, s, quantize=True, y_range=y_range)
        if kernel_dir is not None:
            for suffix, kernel in zip(("gt", "pred", "diff"), kernel_triptych(k_gt, k_hat)):
                write_kernel_pgm(kernel_dir / f"{entry_id}_{suffix}.pgm", kernel)
    logger.debug(f"Evaluated {entry_id}: PSNR {row.psnr:.3f} dB, theta MSE {row.theta_mse:.3e}")
    return row


def aggregate_rows(rows: List[ImageMetrics]) -> Dict[str, MetricSummary]:
    """Mean, population std and count of every metric present in the rows."""
    summary: Dict[str, MetricSummary] = {}
    for name in METRIC_FIELDS:
        values = np.array([getattr(row, name) for row in rows if getattr(row, name) is not None], dtype=np.float64)
        if values.size == 0:
            continue
        with np.errstate(invalid="ignore"):
            summary[name] = MetricSummary(mean=float(values.mean()), std=float(values.std()), count=int(values.size))
    return summary


def evaluate(
    dataset: PairDataset,
    checkpoint: Checkpoint,
    use_gt_degradation: bool = False,
    iterations: Optional[int] = None,
    border: int = 0,
    y_range: YRange = "studio",
    threads: int = 1,
    kernel_dir: Optional[PathLike] = None,
    manifest_label: str = "",
) -> EvalReport:
    """
    Score a checkpoint on every pair of a dataset.

    Args:
        dataset: Loaded pairs
        checkpoint: Trained network
        use_gt_degradation: Feed the ground-truth theta to the Restorer
        iterations: Unfolding depth override
        border: Pixels shaved before PSNR/SSIM
        y_range: Luma convention
        threads: Worker threads over images
        kernel_dir: Directory for (GT, predicted, |diff|) kernel PGMs
        manifest_label: Manifest path recorded in the report

    Returns:
        EvalReport with one row per manifest entry
    """
    if dataset.scale != checkpoint.config.sr_scale:
        raise ParameterDomainError(
            f"Dataset scale x{dataset.scale} does not match the network scale x{checkpoint.config.sr_scale}"
        )
    network = checkpoint.network()
    steps = iterations or checkpoint.config.iterations
    out_dir = Path(kernel_dir) if kernel_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def work(index: int) -> ImageMetrics:
        return _image_metrics(
            index, dataset, network, checkpoint, use_gt_degradation, steps, border, y_range, out_dir
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(work, range(len(dataset))))

    report = EvalReport(
        manifest=manifest_label,
        checkpoint_hash=checkpoint.sha256 or "",
        config_hash=checkpoint.config.config_hash(),
        use_gt_degradation=use_gt_degradation,
        iterations=steps,
        shave=border,
        y_range=y_range,
        rows=rows,
        aggregates=aggregate_rows(rows),
    )
    if "psnr" in report.aggregates:
        logger.info(
            f"Evaluated {len(rows)} images at T={steps}: mean PSNR {report.aggregates['psnr'].mean:.3f} dB, "
            f"mean SSIM {report.aggregates['ssim'].mean:.4f}"
        )
    return report


def evaluate_paths(manifest_path: PathLike, checkpoint_path: PathLike, **options) -> EvalReport:
    """`evaluate` on files."""
    return evaluate(
        load_pairs(manifest_path), load_checkpoint(checkpoint_path), manifest_label=str(manifest_path), **options
    )


def write_report(report: EvalReport, json_path: PathLike, csv_path: Optional[PathLike] = None) -> None:
    """Write the report as JSON and, optionally, its rows as CSV."""
    Path(json_path).parent.mkdir(parents=True, exist_ok=True)
    Path(json_path).write_text(report.model_dump_json(indent=2))
    if csv_path is not None:
        pd.DataFrame([row.model_dump() for row in report.rows]).to_csv(csv_path, index=False)
    logger.info(f"Wrote evaluation report to {json_path}")
