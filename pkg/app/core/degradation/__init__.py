"""
Degradation models: filtering, resampling, noise, JPEG, pipelines and the theta codec.
"""
from app.core.degradation.filtering import convolve2d, downsample_s_fold
from app.core.degradation.jpeg import jpeg_roundtrip
from app.core.degradation.noise import add_gaussian_noise, add_poisson_noise
from app.core.degradation.pipeline import (
    apply_stage,
    degrade_blurry,
    degrade_for_preset,
    degrade_two_stage,
    realize_stage_kernel,
)
from app.core.degradation.presets import sample_degradation
from app.core.degradation.resize import resize, resize_to_shape
from app.core.degradation.theta_codec import decode_theta, decode_theta_with_repairs, encode_theta

__all__ = [
    "add_gaussian_noise",
    "add_poisson_noise",
    "apply_stage",
    "convolve2d",
    "decode_theta",
    "decode_theta_with_repairs",
    "degrade_blurry",
    "degrade_for_preset",
    "degrade_two_stage",
    "downsample_s_fold",
    "encode_theta",
    "jpeg_roundtrip",
    "realize_stage_kernel",
    "resize",
    "resize_to_shape",
    "sample_degradation",
]
