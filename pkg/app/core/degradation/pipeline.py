"""
Degradation pipelines.

A stage applies blur -> resize -> noise -> JPEG in that order and clamps its
output to [0, 1]. The two-stage model runs two stages and finishes with an
exact bicubic resize to HR / s. The blurry model is (x (*) k) decimated s-fold.

Random draws happen in a fixed order (stage-1 kernel noise, stage-1 pixel
noise, stage-2 kernel noise, stage-2 pixel noise), so an (hr, params, seed)
triple reproduces its LR bit for bit.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from app.core.degradation.filtering import as_image, convolve2d, downsample_s_fold
from app.core.degradation.jpeg import jpeg_roundtrip
from app.core.degradation.noise import add_gaussian_noise, add_poisson_noise
from app.core.degradation.resize import resize, resize_to_shape
from app.core.errors import ParameterDomainError, ShapeMismatchError
from app.core.kernels import kernel_from_spec
from app.schemas.degradation import DegradationParams, StageParams

logger = logging.getLogger(__name__)


def realize_stage_kernel(stage: StageParams, rng: Optional[np.random.Generator]) -> Optional[np.ndarray]:
    """The kernel a stage applies, or None for the pulse stage."""
    if stage.blur is None:
        return None
    return kernel_from_spec(stage.blur, stage.kernel_noise, rng)


def _run_stage(
    image: np.ndarray,
    stage: StageParams,
    rng: np.random.Generator,
    kernel: Optional[np.ndarray],
    chroma_subsampling: bool,
) -> np.ndarray:
    if kernel is not None:
        image = convolve2d(image, kernel)
    if stage.resize.scale != 1.0:
        image = resize(image, stage.resize)
    image = np.clip(image, 0.0, 1.0)

    noise = stage.noise
    if noise.gaussian:
        image = add_gaussian_noise(image, noise.sigma_g, noise.color, rng)
    elif noise.poisson_lambda > 0:
        image = add_poisson_noise(image, noise.poisson_lambda, noise.color, rng)

    if stage.jpeg.enabled:
        image = jpeg_roundtrip(image, stage.jpeg.quality, chroma_subsampling)
    return np.clip(image, 0.0, 1.0)


def apply_stage(
    image: np.ndarray,
    stage: StageParams,
    rng: np.random.Generator,
    kernel: Optional[np.ndarray] = None,
    chroma_subsampling: bool = False,
) -> np.ndarray:
    """
    Apply one blur -> resize -> noise -> JPEG stage.

    Args:
        image: (C, H, W) image in [0, 1]
        stage: Stage parameters
        rng: Random stream for kernel and pixel noise
        kernel: Pre-realized kernel; realized from the stage when omitted
        chroma_subsampling: Use 4:2:0 chroma in the JPEG step

    Returns:
        Degraded image in [0, 1]
    """
    image = as_image(image)
    if kernel is None:
        kernel = realize_stage_kernel(stage, rng)
    return _run_stage(image, stage, rng, kernel, chroma_subsampling)


def _check_divisible(hr: np.ndarray, s: int) -> None:
    _, height, width = hr.shape
    if height % s or width % s:
        raise ShapeMismatchError(f"HR image {height}x{width} is not divisible by scale {s}")


def degrade_two_stage_with_kernels(
    hr: np.ndarray,
    params: DegradationParams,
    rng: np.random.Generator,
    chroma_subsampling: bool = False,
) -> Tuple[np.ndarray, List[Optional[np.ndarray]]]:
    """`degrade_two_stage` that also returns the two realized kernels."""
    hr = as_image(hr)
    s = params.target_sr_scale
    _check_divisible(hr, s)
    kernels: List[Optional[np.ndarray]] = []
    image = hr
    for stage in (params.stage1, params.stage2):
        kernel = realize_stage_kernel(stage, rng)
        kernels.append(kernel)
        image = _run_stage(image, stage, rng, kernel, chroma_subsampling)
    lr = resize_to_shape(image, hr.shape[1] // s, hr.shape[2] // s, "bicubic")
    return np.clip(lr, 0.0, 1.0), kernels


def degrade_two_stage(
    hr: np.ndarray, params: DegradationParams, rng: np.random.Generator, chroma_subsampling: bool = False
) -> np.ndarray:
    """
    Run both stages and resize exactly to (H / s, W / s) with bicubic.

    Args:
        hr: (C, H, W) HR image with H and W divisible by params.target_sr_scale
        params: Two-stage degradation
        rng: Random stream
        chroma_subsampling: Use 4:2:0 chroma in JPEG steps

    Returns:
        LR image in [0, 1]
    """
    lr, _ = degrade_two_stage_with_kernels(hr, params, rng, chroma_subsampling)
    return lr


def degrade_blurry(hr: np.ndarray, kernel: np.ndarray, s: int) -> np.ndarray:
    """Blur with `kernel` and keep the upper-left pixel of each s x s block."""
    hr = as_image(hr)
    _check_divisible(hr, s)
    return downsample_s_fold(convolve2d(hr, kernel), s)


def degrade_for_preset(
    hr: np.ndarray,
    params: DegradationParams,
    model: str,
    rng: np.random.Generator,
    chroma_subsampling: bool = False,
) -> Tuple[np.ndarray, List[Optional[np.ndarray]]]:
    """
    Dispatch to the blurry or two-stage model.

    The blurry model realizes the stage-1 kernel, decimates, then applies the
    stage-1 pixel noise if any.

    Returns:
        (lr, kernels) with one realized kernel (or None) per applied stage
    """
    if model == "two_stage":
        return degrade_two_stage_with_kernels(hr, params, rng, chroma_subsampling)
    if model != "blurry":
        raise ParameterDomainError(f"Unknown degradation model '{model}'")

    stage = params.stage1
    kernel = realize_stage_kernel(stage, rng)
    hr = as_image(hr)
    if kernel is None:
        _check_divisible(hr, params.target_sr_scale)
        lr = downsample_s_fold(hr, params.target_sr_scale)
    else:
        lr = degrade_blurry(hr, kernel, params.target_sr_scale)
    if stage.noise.gaussian and stage.noise.sigma_g > 0:
        lr = add_gaussian_noise(lr, stage.noise.sigma_g, stage.noise.color, rng)
    return np.clip(lr, 0.0, 1.0), [kernel]
