"""
Named degradation distributions.

blurry_x2 / blurry_x4
    One anisotropic Gaussian blur (sigma in (0.6, 5.0), theta in [-pi, pi])
    with 25% multiplicative kernel noise, followed by s-fold decimation.
    Stage 2 is the identity. Optional AWGN via `blurry_noise`.

real_x2 / real_x4
    Two full blur -> resize -> noise -> JPEG stages with a final exact
    bicubic resize to HR / s.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Literal, Tuple

import numpy as np

from app.core.errors import ParameterDomainError
from app.core.kernels import sample_kernel_spec
from app.schemas.degradation import (
    RESIZE_MODES,
    DegradationParams,
    JpegSpec,
    NoiseSpec,
    ResizeSpec,
    StageParams,
)

logger = logging.getLogger(__name__)

DegradationModel = Literal["blurry", "two_stage"]


@dataclass(frozen=True)
class DegradationPreset:
    model: DegradationModel
    sr_scale: int
    kernel_preset: str


@dataclass(frozen=True)
class RealStageRanges:
    kernel_preset: str
    blur_prob: float
    scale_range: Tuple[float, float]


DEGRADATION_PRESETS: Dict[str, DegradationPreset] = {
    "blurry_x2": DegradationPreset(model="blurry", sr_scale=2, kernel_preset="blurry_x2"),
    "blurry_x4": DegradationPreset(model="blurry", sr_scale=4, kernel_preset="blurry_x4"),
    "real_x2": DegradationPreset(model="two_stage", sr_scale=2, kernel_preset="real_stage1"),
    "real_x4": DegradationPreset(model="two_stage", sr_scale=4, kernel_preset="real_stage1"),
}

BLURRY_KERNEL_NOISE = 0.25
REAL_KERNEL_NOISE = 0.25
REAL_STAGES = (
    RealStageRanges(kernel_preset="real_stage1", blur_prob=1.0, scale_range=(0.5, 1.5)),
    RealStageRanges(kernel_preset="real_stage2", blur_prob=0.8, scale_range=(0.5, 1.2)),
)
GAUSSIAN_NOISE_PROB = 0.5
GRAY_NOISE_PROB = 0.4
SIGMA_G_RANGE = (1.0 / 255.0, 30.0 / 255.0)
POISSON_LAMBDA_RANGE = (1e-4, 1e-2)
JPEG_QUALITY_RANGE = (30, 95)

# Smallest HR side the real presets accept: two 0.5x resizes must still fit a 21-tap kernel
MIN_REAL_HR_SIZE = 96


def get_preset(name: str) -> DegradationPreset:
    try:
        return DEGRADATION_PRESETS[name]
    except KeyError:
        raise ParameterDomainError(f"Unknown degradation preset '{name}'; expected one of {sorted(DEGRADATION_PRESETS)}")


def _sample_real_stage(ranges: RealStageRanges, rng: np.random.Generator, noise_sinc_kernels: bool) -> StageParams:
    blur = None
    kernel_noise = 0.0
    if rng.random() < ranges.blur_prob:
        blur = sample_kernel_spec(ranges.kernel_preset, rng)
        if blur.kind != "sinc" or noise_sinc_kernels:
            kernel_noise = REAL_KERNEL_NOISE

    resize = ResizeSpec(
        mode=RESIZE_MODES[int(rng.integers(len(RESIZE_MODES)))],
        scale=float(rng.uniform(*ranges.scale_range)),
    )

    gaussian = bool(rng.random() < GAUSSIAN_NOISE_PROB)
    color = bool(rng.random() >= GRAY_NOISE_PROB)
    if gaussian:
        noise = NoiseSpec(gaussian=True, color=color, sigma_g=float(rng.uniform(*SIGMA_G_RANGE)))
    else:
        noise = NoiseSpec(gaussian=False, color=color, poisson_lambda=float(rng.uniform(*POISSON_LAMBDA_RANGE)))

    quality = int(rng.integers(JPEG_QUALITY_RANGE[0], JPEG_QUALITY_RANGE[1] + 1))
    return StageParams(blur=blur, resize=resize, noise=noise, jpeg=JpegSpec(enabled=True, quality=quality), kernel_noise=kernel_noise)


def sample_degradation(
    preset: str,
    rng: np.random.Generator,
    blurry_noise: float = 0.0,
    noise_sinc_kernels: bool = False,
) -> DegradationParams:
    """
    Draw degradation parameters from a named preset.

    Args:
        preset: One of blurry_x2, blurry_x4, real_x2, real_x4
        rng: Random stream
        blurry_noise: Upper bound of the AWGN sigma added by blurry presets (0 disables)
        noise_sinc_kernels: Apply multiplicative kernel noise to sinc kernels too

    Returns:
        Valid DegradationParams
    """
    cfg = get_preset(preset)
    if cfg.model == "blurry":
        if not 0.0 <= blurry_noise <= SIGMA_G_RANGE[1]:
            raise ParameterDomainError(f"blurry_noise must lie in [0, {SIGMA_G_RANGE[1]:.4f}], got {blurry_noise}")
        noise = NoiseSpec()
        if blurry_noise > 0:
            noise = NoiseSpec(gaussian=True, color=True, sigma_g=float(rng.uniform(0.0, blurry_noise)))
        stage1 = StageParams(
            blur=sample_kernel_spec(cfg.kernel_preset, rng),
            noise=noise,
            kernel_noise=BLURRY_KERNEL_NOISE,
        )
        return DegradationParams(stage1=stage1, stage2=StageParams.identity(), target_sr_scale=cfg.sr_scale)

    stage1 = _sample_real_stage(REAL_STAGES[0], rng, noise_sinc_kernels)
    stage2 = _sample_real_stage(REAL_STAGES[1], rng, noise_sinc_kernels)
    return DegradationParams(stage1=stage1, stage2=stage2, target_sr_scale=cfg.sr_scale)


def preset_scale(preset: str) -> int:
    return get_preset(preset).sr_scale


def preset_model(preset: str) -> DegradationModel:
    return get_preset(preset).model


def min_hr_size(preset: str) -> int:
    """Smallest square HR side a preset can degrade."""
    cfg = get_preset(preset)
    if cfg.model == "two_stage":
        return MIN_REAL_HR_SIZE
    kernel_size = 11 if cfg.kernel_preset == "blurry_x2" else 31
    return int(math.ceil(kernel_size / cfg.sr_scale) * cfg.sr_scale)
