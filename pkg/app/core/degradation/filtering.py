"""
Blur and decimation primitives.

Images are float64 arrays shaped (C, H, W) with values in [0, 1].
"""
import logging

import numpy as np
from scipy import ndimage

from app.core.errors import ParameterDomainError, ShapeMismatchError

logger = logging.getLogger(__name__)


def as_image(image: np.ndarray) -> np.ndarray:
    """Coerce to a float64 (C, H, W) array; 2-D input gains a channel axis."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    if image.ndim != 3:
        raise ShapeMismatchError(f"Expected a (C, H, W) image, got shape {image.shape}")
    return image


def convolve2d(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """
    Per-channel 2-D correlation with reflect-padded borders.

    Analytic kernels are point-symmetric, so correlation and convolution
    coincide for them. Perturbed kernels use the same orientation here and in
    LR-PSNR scoring.

    Args:
        image: (C, H, W) image
        kernel: Odd-sized square kernel

    Returns:
        Filtered image of the same shape
    """
    image = as_image(image)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise ParameterDomainError(f"Kernel must be square and odd-sized, got shape {kernel.shape}")
    size = kernel.shape[0]
    if size > image.shape[1] or size > image.shape[2]:
        raise ParameterDomainError(
            f"Kernel of size {size} is larger than the {image.shape[1]}x{image.shape[2]} image"
        )
    # scipy's "mirror" mode is numpy's "reflect" (edge sample not repeated)
    return np.stack([ndimage.correlate(channel, kernel, mode="mirror") for channel in image])


def downsample_s_fold(image: np.ndarray, s: int) -> np.ndarray:
    """Keep the upper-left pixel of every s x s block."""
    image = as_image(image)
    if s < 1:
        raise ParameterDomainError(f"Downsampling factor must be >= 1, got {s}")
    _, height, width = image.shape
    if height % s or width % s:
        raise ShapeMismatchError(f"Image {height}x{width} is not divisible by {s}")
    return image[:, ::s, ::s].copy()
