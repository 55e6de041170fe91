"""
Additive Gaussian and Poisson (shot) noise.
"""
import numpy as np

from app.core.degradation.filtering import as_image
from app.core.errors import ParameterDomainError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def luminance(image: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB image as a (1, H, W) array; grayscale input passes through."""
    image = as_image(image)
    if image.shape[0] == 1:
        return image.copy()
    return np.tensordot(LUMA_WEIGHTS, image, axes=(0, 0))[None]


def add_gaussian_noise(image: np.ndarray, sigma_g: float, color: bool, rng: np.random.Generator) -> np.ndarray:
    """
    Add zero-mean Gaussian noise and clamp to [0, 1].

    Args:
        image: (C, H, W) image
        sigma_g: Noise standard deviation in [0, 1] image units
        color: Independent draws per channel; otherwise one draw per pixel shared by all channels
        rng: Random stream, untouched when sigma_g is 0

    Returns:
        Noisy image
    """
    image = as_image(image)
    if sigma_g < 0:
        raise ParameterDomainError(f"sigma_g must be non-negative, got {sigma_g}")
    if sigma_g == 0:
        return image.copy()
    shape = image.shape if color else (1,) + image.shape[1:]
    noise = rng.normal(0.0, sigma_g, size=shape)
    return np.clip(image + noise, 0.0, 1.0)


def add_poisson_noise(image: np.ndarray, lam: float, color: bool, rng: np.random.Generator) -> np.ndarray:
    """
    Shot noise y = Poisson(x * v) / v with v = 1 / lam, so Var(y) = x * lam.

    Gray mode draws counts on the luminance and adds the same residual to
    every channel.

    Args:
        image: (C, H, W) image
        lam: Noise level, > 0
        color: Per-channel counts when True
        rng: Random stream

    Returns:
        Noisy image clamped to [0, 1]
    """
    image = as_image(image)
    if not lam > 0:
        raise ParameterDomainError(f"Poisson noise level must be positive, got {lam}")
    v = 1.0 / lam
    if color:
        noisy = rng.poisson(image * v) / v
        return np.clip(noisy, 0.0, 1.0)
    luma = np.clip(luminance(image), 0.0, None)
    residual = rng.poisson(luma * v) / v - luma
    return np.clip(image + residual, 0.0, 1.0)
