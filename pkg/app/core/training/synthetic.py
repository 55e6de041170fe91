"""
Procedural HR images.

Each image layers a smooth color gradient, band-limited noise, a periodic
pattern (stripes or checkerboard) and a few filled convex polygons, which
gives edges and textures across frequencies. Image i of a set depends only
on (seed, i).
"""
import logging
import math
from typing import List

import numpy as np
from scipy import ndimage

from app.core.errors import ParameterDomainError
from app.utils.rng import derive_seed, make_rng

logger = logging.getLogger(__name__)


def _gradient(size: int, rng: np.random.Generator) -> np.ndarray:
    axis = np.linspace(-0.5, 0.5, size)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    base = rng.uniform(0.2, 0.8, size=(3, 1, 1))
    slopes = rng.uniform(-0.4, 0.4, size=(3, 2, 1, 1))
    return base + slopes[:, 0] * xx + slopes[:, 1] * yy


def _band_limited_noise(size: int, rng: np.random.Generator) -> np.ndarray:
    sigma = rng.uniform(0.5, 4.0)
    noise = ndimage.gaussian_filter(rng.standard_normal((3, size, size)), sigma=(0, sigma, sigma), mode="wrap")
    noise /= noise.std() + 1e-12
    return noise * rng.uniform(0.03, 0.12)


def _periodic_pattern(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    if rng.random() < 0.5:
        angle = rng.uniform(0, math.pi)
        period = rng.uniform(3.0, size / 4.0)
        phase = (xx * math.cos(angle) + yy * math.sin(angle)) * 2 * math.pi / period
        pattern = 0.5 * (1 + np.sin(phase))
    else:
        cell = int(rng.integers(3, max(4, size // 6)))
        pattern = ((xx // cell + yy // cell) % 2).astype(np.float64)
    color = rng.uniform(-0.25, 0.25, size=(3, 1, 1))
    return pattern[None] * color


def _convex_polygon_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    center = rng.uniform(0.2 * size, 0.8 * size, size=2)
    radius = rng.uniform(0.1 * size, 0.35 * size)
    count = int(rng.integers(3, 8))
    angles = np.sort(rng.uniform(0, 2 * math.pi, size=count))
    vertices = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    inside = np.ones((size, size), dtype=bool)
    for i in range(count):
        (x0, y0), (x1, y1) = vertices[i], vertices[(i + 1) % count]
        # counter-clockwise vertex order: interior lies left of every edge
        inside &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return inside


def synth_hr_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """
    One procedural (3, size, size) image in [0, 1].

    Args:
        size: Side length in pixels
        rng: Random stream

    Returns:
        float64 image
    """
    if size < 8:
        raise ParameterDomainError(f"Procedural images need size >= 8, got {size}")
    image = _gradient(size, rng) + _band_limited_noise(size, rng) + _periodic_pattern(size, rng)
    for _ in range(int(rng.integers(1, 5))):
        mask = _convex_polygon_mask(size, rng)
        color = rng.uniform(0.0, 1.0, size=(3, 1, 1))
        alpha = rng.uniform(0.6, 1.0)
        image = np.where(mask[None], (1 - alpha) * image + alpha * color, image)
    return np.clip(image, 0.0, 1.0)


def synth_hr_at(size: int, seed: int, index: int) -> np.ndarray:
    """Image `index` of the procedural set addressed by `seed`."""
    return synth_hr_image(size, make_rng(derive_seed(seed, index, 1)))


def synth_hr_images(n: int, size: int, seed: int) -> List[np.ndarray]:
    """Images 0..n-1 of the procedural set addressed by `seed`."""
    if n < 0:
        raise ParameterDomainError(f"Image count must be non-negative, got {n}")
    return [synth_hr_at(size, seed, index) for index in range(n)]
