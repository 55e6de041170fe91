"""
Full-reference quality metrics on [0, 1] images.

PSNR and SSIM are computed on the luma channel by default. Studio-swing luma
(16..235) follows the usual super-resolution convention; full-range BT.601
luma is available with y_range="full".
"""
import logging
import math
from typing import Literal

import numpy as np
from skimage.color import rgb2ycbcr
from skimage.metrics import mean_squared_error, structural_similarity

from app.core.degradation.noise import luminance
from app.core.errors import ParameterDomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

YRange = Literal["studio", "full"]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _chw(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image[None]
    if image.ndim != 3:
        raise ShapeMismatchError(f"Expected a (C, H, W) image, got shape {image.shape}")
    return image


def rgb_to_y(image: np.ndarray, y_range: YRange = "studio") -> np.ndarray:
    """
    Luma plane of a (3, H, W) RGB image in [0, 1].

    Args:
        image: RGB image; single-channel input is returned as its only plane
        y_range: "studio" gives (65.481 R + 128.553 G + 24.966 B + 16) / 255,
            "full" gives 0.299 R + 0.587 G + 0.114 B

    Returns:
        (H, W) float64 array
    """
    image = _chw(image)
    if image.shape[0] == 1:
        return image[0].copy()
    if image.shape[0] != 3:
        raise ShapeMismatchError(f"rgb_to_y needs 1 or 3 channels, got {image.shape[0]}")
    if y_range == "studio":
        return rgb2ycbcr(np.moveaxis(image, 0, -1))[..., 0] / 255.0
    if y_range == "full":
        return luminance(image)[0]
    raise ParameterDomainError(f"Unknown y_range '{y_range}'")


def shave(image: np.ndarray, border: int) -> np.ndarray:
    """Drop `border` pixels from each side of the last two axes."""
    if border < 0:
        raise ParameterDomainError(f"Shave border must be non-negative, got {border}")
    if border == 0:
        return image
    height, width = image.shape[-2:]
    if 2 * border >= min(height, width):
        raise ShapeMismatchError(f"Cannot shave {border} pixels from a {height}x{width} image")
    return image[..., border:-border, border:-border]


def _prepare(a: np.ndarray, b: np.ndarray, y_channel: bool, y_range: YRange, border: int):
    a, b = _chw(a), _chw(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Images differ in shape: {a.shape} vs {b.shape}")
    if y_channel:
        a, b = rgb_to_y(a, y_range)[None], rgb_to_y(b, y_range)[None]
    return shave(a, border), shave(b, border)


def psnr(
    a: np.ndarray, b: np.ndarray, y_channel: bool = True, y_range: YRange = "studio", border: int = 0
) -> float:
    """
    10 log10(1 / MSE) in dB for [0, 1] data; identical inputs give +inf.

    Args:
        a: (C, H, W) or (H, W) image
        b: Image of the same shape
        y_channel: Compare luma planes instead of raw channels
        y_range: Luma convention
        border: Pixels shaved from every side before comparing
    """
    a, b = _prepare(a, b, y_channel, y_range, border)
    mse = mean_squared_error(a, b)
    if mse == 0.0:
        return math.inf
    return float(10.0 * math.log10(1.0 / mse))


def ssim(
    a: np.ndarray, b: np.ndarray, y_channel: bool = True, y_range: YRange = "studio", border: int = 0
) -> float:
    """
    Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
    K2 = 0.03 and dynamic range 1, averaged over valid window positions and
    over channels in raw mode.
    """
    a, b = _prepare(a, b, y_channel, y_range, border)
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ShapeMismatchError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[-2:]}")
    value = structural_similarity(
        a,
        b,
        data_range=1.0,
        channel_axis=0,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=SSIM_K1,
        K2=SSIM_K2,
    )
    return float(value)
