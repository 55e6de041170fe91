"""
Kernel accuracy: kernel MSE and LR-PSNR of a predicted kernel.
"""
from typing import Optional, Sequence

import numpy as np

from app.core.degradation.pipeline import degrade_blurry
from app.core.degradation.theta_codec import decode_theta
from app.core.errors import ShapeMismatchError
from app.core.kernels import kernel_from_spec, pulse_kernel
from app.core.metrics.quality import YRange, psnr
from app.utils.image_io import dequantize_8bit, quantize_8bit


def pad_kernel(kernel: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad a square odd kernel to `size`, keeping it centered."""
    kernel = np.asarray(kernel, dtype=np.float64)
    current = kernel.shape[0]
    if kernel.ndim != 2 or kernel.shape[1] != current or current % 2 == 0:
        raise ShapeMismatchError(f"Expected a square odd kernel, got shape {kernel.shape}")
    if size < current or size % 2 == 0:
        raise ShapeMismatchError(f"Cannot pad a {current}x{current} kernel to {size}")
    margin = (size - current) // 2
    return np.pad(kernel, margin)


def kernel_mse(k_hat: np.ndarray, k_gt: np.ndarray) -> float:
    """
    Mean squared difference of two sum-normalized kernels.

    Kernels of different sizes are zero-padded to the larger size around
    their centers first.
    """
    size = max(np.shape(k_hat)[0], np.shape(k_gt)[0])
    diff = pad_kernel(k_hat, size) - pad_kernel(k_gt, size)
    return float(np.mean(diff * diff))


def kernel_from_theta(theta: Sequence[float], sr_scale: int = 4) -> np.ndarray:
    """Noise-free stage-1 kernel of a theta vector; a pulse when the stage does not blur."""
    params = decode_theta(theta, sr_scale)
    blur = params.stage1.blur
    return pulse_kernel(1) if blur is None else kernel_from_spec(blur)


def lr_psnr(
    hr: np.ndarray,
    lr: np.ndarray,
    kernel: np.ndarray,
    s: int,
    quantize: bool = False,
    y_range: YRange = "studio",
    border: int = 0,
) -> float:
    """
    PSNR between `lr` and the LR regenerated by degrading `hr` with `kernel`.

    Args:
        hr: HR image
        lr: Observed LR image
        kernel: Predicted kernel
        s: Scale factor
        quantize: Round the regenerated LR to 8 bits, matching stored LR files
        y_range: Luma convention
        border: Pixels shaved before comparing
    """
    regenerated = degrade_blurry(hr, kernel, s)
    if quantize:
        regenerated = dequantize_8bit(quantize_8bit(regenerated))
    return psnr(regenerated, lr, y_range=y_range, border=border)


def kernel_triptych(k_gt: np.ndarray, k_hat: np.ndarray, size: Optional[int] = None):
    """(ground truth, predicted, |difference|) padded to a common size."""
    size = size or max(np.shape(k_hat)[0], np.shape(k_gt)[0])
    gt, pred = pad_kernel(k_gt, size), pad_kernel(k_hat, size)
    return gt, pred, np.abs(gt - pred)
