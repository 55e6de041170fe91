"""
Blur kernel synthesis.

Three analytic families are supported:

- generalized Gaussian: w = exp(-0.5 * q^beta)
- plateau:              w = 1 / (1 + q^beta)
- sinc (circular low-pass): w = omega_c / (2 pi r) * J1(omega_c r)

where q = [x y] S^-1 [x y]^T over integer coordinates centered on the kernel
midpoint (x runs along columns, y along rows) and
S = Rot(theta) diag(sigma_x^2, sigma_y^2) Rot(theta)^T.

Kernels are float64 (k, k) arrays. All functions are pure given the RNG
passed in.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from app.core.errors import DegenerateKernelError, ParameterDomainError
from app.schemas.degradation import BlurKernelSpec

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Power series below this magnitude, Hankel expansion above it
_BESSEL_SERIES_LIMIT = 12.0
_BESSEL_SERIES_TERMS = 30
_BESSEL_ASYMPTOTIC_TERMS = 30


def _check_size(size: int) -> None:
    if size < 3 or size % 2 == 0:
        raise ParameterDomainError(f"Kernel size must be an odd integer >= 3, got {size}")


def kernel_grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Centered integer coordinates (x along columns, y along rows)."""
    half = (size - 1) // 2
    axis = np.arange(-half, half + 1, dtype=np.float64)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    return xx, yy


def inverse_covariance(sigma_x: float, sigma_y: float, theta: float) -> Tuple[float, float, float]:
    """
    Entries (a, b, c) of S^-1 = [[a, b], [b, c]] for the rotated covariance.

    S = Rot(theta) diag(sigma_x^2, sigma_y^2) Rot(theta)^T, so its inverse is
    Rot(theta) diag(1/sigma_x^2, 1/sigma_y^2) Rot(theta)^T.
    """
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    inv_x, inv_y = 1.0 / (sigma_x * sigma_x), 1.0 / (sigma_y * sigma_y)
    a = cos_t * cos_t * inv_x + sin_t * sin_t * inv_y
    b = cos_t * sin_t * (inv_x - inv_y)
    c = sin_t * sin_t * inv_x + cos_t * cos_t * inv_y
    return a, b, c


def _quadratic_form(sigma_x: float, sigma_y: float, theta: float, size: int) -> np.ndarray:
    if sigma_x <= 0 or sigma_y <= 0:
        raise ParameterDomainError(f"sigma_x and sigma_y must be positive, got ({sigma_x}, {sigma_y})")
    _check_size(size)
    a, b, c = inverse_covariance(sigma_x, sigma_y, theta)
    xx, yy = kernel_grid(size)
    # x*y is sign-symmetric, so q(-x, -y) == q(x, y) bit for bit
    return a * xx * xx + 2.0 * b * xx * yy + c * yy * yy


def synth_gaussian_kernel(
    sigma_x: float, sigma_y: float, theta: float, beta: float, size: int, normalize: bool = True
) -> np.ndarray:
    """
    Generalized Gaussian kernel exp(-0.5 * q^beta).

    Args:
        sigma_x: Standard deviation along the rotated x axis (pixels)
        sigma_y: Standard deviation along the rotated y axis (pixels)
        theta: Rotation angle in radians
        beta: Shape parameter; beta = 1 is the ordinary Gaussian
        size: Odd side length
        normalize: Scale weights to sum to one

    Returns:
        (size, size) float64 kernel
    """
    if beta <= 0:
        raise ParameterDomainError(f"beta must be positive, got {beta}")
    q = _quadratic_form(sigma_x, sigma_y, theta, size)
    kernel = np.exp(-0.5 * np.power(q, beta))
    return normalize_kernel(kernel) if normalize else kernel


def synth_plateau_kernel(
    sigma_x: float, sigma_y: float, theta: float, beta: float, size: int, normalize: bool = True
) -> np.ndarray:
    """Plateau kernel 1 / (1 + q^beta); arguments as in `synth_gaussian_kernel`."""
    if beta <= 0:
        raise ParameterDomainError(f"beta must be positive, got {beta}")
    q = _quadratic_form(sigma_x, sigma_y, theta, size)
    kernel = 1.0 / (1.0 + np.power(q, beta))
    return normalize_kernel(kernel) if normalize else kernel


def _bessel_j1_series(x: np.ndarray) -> np.ndarray:
    # J1(x) = sum_k (-1)^k (x/2)^(2k+1) / (k! (k+1)!)
    half = x / 2.0
    term = half.copy()
    total = term.copy()
    sq = half * half
    for k in range(1, _BESSEL_SERIES_TERMS):
        term = term * (-sq) / (k * (k + 1))
        total = total + term
    return total


def _bessel_j1_asymptotic(x: np.ndarray) -> np.ndarray:
    # Hankel expansion for nu = 1: J1 = sqrt(2/(pi x)) (P cos chi - Q sin chi), chi = x - 3 pi / 4.
    # Truncated at the smallest term; for x >= 12 the remainder is below 1e-10.
    mu = 4.0
    p = np.ones_like(x)
    q = np.zeros_like(x)
    coeff = 1.0
    power = np.ones_like(x)
    last = np.full_like(x, np.inf)
    active = np.ones_like(x, dtype=bool)
    for k in range(1, _BESSEL_ASYMPTOTIC_TERMS):
        coeff *= (mu - (2 * k - 1) ** 2) / (k * 8.0)
        power = power / x
        term = coeff * power
        magnitude = np.abs(term)
        active &= magnitude < last
        last = np.where(active, magnitude, last)
        signed = term if (k // 2) % 2 == 0 else -term
        if k % 2 == 0:
            p = p + np.where(active, signed, 0.0)
        else:
            q = q + np.where(active, signed, 0.0)
    chi = x - 0.75 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j1(x: ArrayLike) -> ArrayLike:
    """
    Bessel function of the first kind, order one.

    Uses a 30-term power series for |x| < 12 (cancellation error below 1e-12)
    and the Hankel asymptotic expansion beyond, with absolute error below
    1e-8 on |x| <= 100.

    Args:
        x: Scalar or array argument

    Returns:
        J1(x) with the same shape as x
    """
    arr = np.asarray(x, dtype=np.float64)
    magnitude = np.abs(arr)
    sign = np.sign(arr)
    small = magnitude < _BESSEL_SERIES_LIMIT

    result = np.zeros_like(magnitude)
    if np.any(small):
        result[small] = _bessel_j1_series(magnitude[small])
    if np.any(~small):
        result[~small] = _bessel_j1_asymptotic(magnitude[~small])
    result = sign * result
    if np.ndim(x) == 0:
        return float(result)
    return result


def synth_sinc_kernel(omega_c: float, size: int, normalize: bool = True) -> np.ndarray:
    """
    Circularly symmetric low-pass kernel.

    Args:
        omega_c: Cutoff frequency in (0, pi] radians per pixel
        size: Odd side length
        normalize: Scale weights to sum to one

    Returns:
        (size, size) float64 kernel; may carry negative lobes
    """
    if not 0.0 < omega_c <= math.pi:
        raise ParameterDomainError(f"omega_c must lie in (0, pi], got {omega_c}")
    _check_size(size)
    xx, yy = kernel_grid(size)
    radius = np.sqrt(xx * xx + yy * yy)
    center = (size - 1) // 2
    radius[center, center] = 1.0  # placeholder, replaced by the analytic limit below
    kernel = omega_c * bessel_j1(omega_c * radius) / (2.0 * math.pi * radius)
    kernel[center, center] = omega_c * omega_c / (4.0 * math.pi)
    return normalize_kernel(kernel) if normalize else kernel


def normalize_kernel(kernel: np.ndarray) -> np.ndarray:
    """Scale weights so they sum to one; signs are preserved."""
    kernel = np.asarray(kernel, dtype=np.float64)
    total = float(kernel.sum())
    if not math.isfinite(total) or abs(total) < 1e-300:
        raise DegenerateKernelError(f"Cannot normalize kernel with weight sum {total}")
    return kernel / total


def apply_kernel_noise(kernel: np.ndarray, strength: float, rng: Optional[np.random.Generator]) -> np.ndarray:
    """
    Multiply each weight by an independent U[1 - strength, 1 + strength] factor and renormalize.

    Args:
        kernel: Input kernel
        strength: Perturbation strength in [0, 1]
        rng: Random stream; unused when strength is 0

    Returns:
        Perturbed kernel summing to one
    """
    if not 0.0 <= strength <= 1.0:
        raise ParameterDomainError(f"Kernel noise strength must lie in [0, 1], got {strength}")
    kernel = np.asarray(kernel, dtype=np.float64)
    if strength == 0.0:
        return kernel.copy()
    if rng is None:
        raise ParameterDomainError("A random generator is required for kernel noise")
    factors = rng.uniform(1.0 - strength, 1.0 + strength, size=kernel.shape)
    return normalize_kernel(kernel * factors)


@dataclass(frozen=True)
class KernelSamplingPreset:
    """Distributions a kernel preset draws from."""

    sizes: Tuple[int, ...]
    kind_probs: Dict[str, float]
    sigma_range: Tuple[float, float]
    theta_range: Tuple[float, float] = (-math.pi, math.pi)
    gaussian_beta_range: Tuple[float, float] = (1.0, 1.0)
    plateau_beta_range: Tuple[float, float] = (1.0, 2.0)
    omega_range: Tuple[float, float] = (math.pi / 3, math.pi)


_REAL_SIZES = tuple(range(7, 22, 2))

KERNEL_PRESETS: Dict[str, KernelSamplingPreset] = {
    "blurry_x2": KernelSamplingPreset(sizes=(11,), kind_probs={"gaussian": 1.0}, sigma_range=(0.6, 5.0)),
    "blurry_x4": KernelSamplingPreset(sizes=(31,), kind_probs={"gaussian": 1.0}, sigma_range=(0.6, 5.0)),
    "real_stage1": KernelSamplingPreset(
        sizes=_REAL_SIZES,
        kind_probs={"gaussian": 0.7, "plateau": 0.15, "sinc": 0.15},
        sigma_range=(0.2, 3.0),
        gaussian_beta_range=(0.5, 4.0),
    ),
    "real_stage2": KernelSamplingPreset(
        sizes=_REAL_SIZES,
        kind_probs={"gaussian": 0.7, "plateau": 0.15, "sinc": 0.15},
        sigma_range=(0.2, 1.5),
        gaussian_beta_range=(0.5, 4.0),
    ),
}


def sample_kernel_spec(preset: str, rng: np.random.Generator) -> BlurKernelSpec:
    """
    Draw a BlurKernelSpec from a named preset.

    Args:
        preset: One of blurry_x2, blurry_x4, real_stage1, real_stage2
        rng: Random stream

    Returns:
        A valid BlurKernelSpec
    """
    try:
        cfg = KERNEL_PRESETS[preset]
    except KeyError:
        raise ParameterDomainError(f"Unknown kernel preset '{preset}'; expected one of {sorted(KERNEL_PRESETS)}")

    kinds = list(cfg.kind_probs)
    probs = np.array([cfg.kind_probs[k] for k in kinds], dtype=np.float64)
    kind = kinds[int(rng.choice(len(kinds), p=probs / probs.sum()))]
    size = int(cfg.sizes[int(rng.integers(len(cfg.sizes)))])

    if kind == "sinc":
        return BlurKernelSpec.sinc(size=size, omega_c=float(rng.uniform(*cfg.omega_range)))

    sigma_x = float(rng.uniform(*cfg.sigma_range))
    sigma_y = float(rng.uniform(*cfg.sigma_range))
    theta = float(rng.uniform(*cfg.theta_range))
    beta_range = cfg.gaussian_beta_range if kind == "gaussian" else cfg.plateau_beta_range
    beta = float(rng.uniform(*beta_range)) if beta_range[0] != beta_range[1] else beta_range[0]
    return BlurKernelSpec(kind=kind, size=size, sigma_x=sigma_x, sigma_y=sigma_y, theta=theta, beta=beta)


def kernel_from_spec(
    spec: BlurKernelSpec, kernel_noise_strength: float = 0.0, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """
    Realize a kernel: synthesize, optionally perturb, normalize.

    Args:
        spec: Kernel parameters
        kernel_noise_strength: Multiplicative noise strength in [0, 1]
        rng: Random stream, required when the strength is positive

    Returns:
        Normalized (size, size) kernel
    """
    if spec.kind == "gaussian":
        kernel = synth_gaussian_kernel(spec.sigma_x, spec.sigma_y, spec.theta, spec.beta, spec.size)
    elif spec.kind == "plateau":
        kernel = synth_plateau_kernel(spec.sigma_x, spec.sigma_y, spec.theta, spec.beta, spec.size)
    else:
        kernel = synth_sinc_kernel(spec.omega_c, spec.size)
    if kernel_noise_strength > 0.0:
        kernel = apply_kernel_noise(kernel, kernel_noise_strength, rng)
    return kernel


def pulse_kernel(size: int = 1) -> np.ndarray:
    """Identity kernel with a single one at the center."""
    kernel = np.zeros((size, size), dtype=np.float64)
    kernel[size // 2, size // 2] = 1.0
    return kernel


def second_moments(kernel: np.ndarray) -> Tuple[float, float, float]:
    """Central second moments (m_xx, m_xy, m_yy) of a kernel about its midpoint."""
    kernel = np.asarray(kernel, dtype=np.float64)
    xx, yy = kernel_grid(kernel.shape[0])
    total = kernel.sum()
    return (
        float((kernel * xx * xx).sum() / total),
        float((kernel * xx * yy).sum() / total),
        float((kernel * yy * yy).sum() / total),
    )
