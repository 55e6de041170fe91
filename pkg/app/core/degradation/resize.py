"""
Separable resampling with half-pixel alignment.

Each axis is resampled by a dense (n_out, n_in) weight matrix:

- area: exact overlap-weighted average of the source footprint
- bilinear: tent interpolation
- bicubic: Keys cubic convolution with a = -0.5

Output pixel i sits at source coordinate (i + 0.5) / scale - 0.5. Taps that
fall outside the image are folded back with half-sample symmetric reflection.
"""
import math
from functools import lru_cache

import numpy as np

from app.core.degradation.filtering import as_image
from app.core.errors import ParameterDomainError
from app.schemas.degradation import RESIZE_MODES, ResizeSpec

BICUBIC_A = -0.5


def _reflect_index(index: np.ndarray, size: int) -> np.ndarray:
    period = 2 * size
    folded = np.mod(index, period)
    return np.where(folded >= size, period - 1 - folded, folded)


def _cubic(x: np.ndarray) -> np.ndarray:
    a = BICUBIC_A
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def _tent(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(x))


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    step = n_in / n_out
    starts = np.arange(n_out) * step
    ends = starts + step
    edges = np.arange(n_in + 1, dtype=np.float64)
    overlap = np.clip(
        np.minimum(ends[:, None], edges[None, 1:]) - np.maximum(starts[:, None], edges[None, :-1]), 0.0, None
    )
    return overlap / overlap.sum(axis=1, keepdims=True)


def _interp_weights(n_in: int, n_out: int, mode: str) -> np.ndarray:
    scale = n_out / n_in
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    if mode == "bilinear":
        support, fn = 1, _tent
    else:
        support, fn = 2, _cubic
    base = np.floor(centers).astype(np.int64)
    offsets = np.arange(-support + 1, support + 1)
    taps = base[:, None] + offsets[None, :]
    weights = fn(centers[:, None] - taps)

    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.broadcast_to(np.arange(n_out)[:, None], taps.shape)
    np.add.at(matrix, (rows, _reflect_index(taps, n_in)), weights)
    return matrix / matrix.sum(axis=1, keepdims=True)


@lru_cache(maxsize=256)
def resize_weights(n_in: int, n_out: int, mode: str) -> np.ndarray:
    """
    Weight matrix mapping an axis of length n_in to n_out samples.

    Rows sum to one, so constant signals are preserved exactly up to rounding.
    """
    if mode not in RESIZE_MODES:
        raise ParameterDomainError(f"Unknown resize mode '{mode}'; expected one of {RESIZE_MODES}")
    if n_in < 1 or n_out < 1:
        raise ParameterDomainError(f"Cannot resample {n_in} samples to {n_out}")
    if mode == "area":
        weights = _area_weights(n_in, n_out)
    else:
        weights = _interp_weights(n_in, n_out, mode)
    weights.setflags(write=False)
    return weights


def resize_to_shape(image: np.ndarray, out_h: int, out_w: int, mode: str) -> np.ndarray:
    """Resample a (C, H, W) image to exactly (out_h, out_w)."""
    image = as_image(image)
    if out_h < 1 or out_w < 1:
        raise ParameterDomainError(f"Degenerate output size {out_h}x{out_w}")
    _, height, width = image.shape
    if (out_h, out_w) == (height, width):
        return image.copy()
    rows = resize_weights(height, out_h, mode)
    cols = resize_weights(width, out_w, mode)
    return rows @ image @ cols.T


def output_size(size: int, scale: float) -> int:
    """round(size * scale) with halves rounded up."""
    return int(math.floor(size * scale + 0.5))


def resize(image: np.ndarray, spec: ResizeSpec) -> np.ndarray:
    """
    Resample an image by the ResizeSpec scale factor.

    Args:
        image: (C, H, W) image
        spec: Mode and output/input size ratio

    Returns:
        Image of size round(H * s) x round(W * s)
    """
    image = as_image(image)
    if spec.scale <= 0:
        raise ParameterDomainError(f"Resize scale must be positive, got {spec.scale}")
    out_h = output_size(image.shape[1], spec.scale)
    out_w = output_size(image.shape[2], spec.scale)
    if out_h < 1 or out_w < 1:
        raise ParameterDomainError(
            f"Resizing {image.shape[1]}x{image.shape[2]} by {spec.scale} gives a degenerate {out_h}x{out_w} image"
        )
    return resize_to_shape(image, out_h, out_w, spec.mode)
