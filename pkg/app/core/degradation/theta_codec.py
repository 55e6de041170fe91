"""
Canonical 36-value encoding of two-stage degradations.

Per stage the 18 slots are

    [k_g, k_c, k_s, sigma_x, sigma_y, theta, beta, omega_c,
     r_area, r_bil, r_bic, s,
     n_t, n_c, sigma_g, lambda,
     j, q]

Discrete slots are 0/1. Continuous slots are mapped affinely to [0, 1] by
the ranges in `THETA_TABLE`. The kernel type is (k_g, k_c) = (1, 0) for
Gaussian, (0, 1) for sinc and (0, 0) for plateau. A kernel size of 1 encodes
the pulse (no blur) stage.

The table is versioned and its hash is stored in manifests and checkpoints.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ShapeMismatchError, ParameterDomainError
from app.schemas.degradation import (
    RESIZE_MODES,
    BlurKernelSpec,
    DegradationParams,
    JpegSpec,
    NoiseSpec,
    ResizeSpec,
    StageParams,
)

logger = logging.getLogger(__name__)

THETA_TABLE_VERSION = 1
THETA_DIM = 36
STAGE_DIM = 18

STAGE_SLOTS: Tuple[str, ...] = (
    "k_g", "k_c", "k_s", "sigma_x", "sigma_y", "theta", "beta", "omega_c",
    "r_area", "r_bil", "r_bic", "s",
    "n_t", "n_c", "sigma_g", "lambda",
    "j", "q",
)

# Continuous slot -> (low, high) of the affine normalization
THETA_TABLE: Dict[str, Tuple[float, float]] = {
    "k_s": (1.0, 31.0),
    "sigma_x": (0.0, 5.0),
    "sigma_y": (0.0, 5.0),
    "theta": (-math.pi, math.pi),
    "beta": (0.0, 4.0),
    "omega_c": (0.0, math.pi),
    "s": (0.5, 1.5),
    "sigma_g": (0.0, 30.0 / 255.0),
    "lambda": (0.0, 0.01),
    "q": (1.0, 100.0),
}

DISCRETE_SLOTS: Tuple[str, ...] = ("k_g", "k_c", "r_area", "r_bil", "r_bic", "n_t", "n_c", "j")

# Smallest values a decoded kernel may carry; decoding lifts smaller values up to these
SIGMA_FLOOR = 0.1
BETA_FLOOR = 0.1
OMEGA_FLOOR = 0.1


def _slot_indices(names: Sequence[str]) -> List[int]:
    per_stage = [STAGE_SLOTS.index(name) for name in names]
    return per_stage + [STAGE_DIM + i for i in per_stage]


DISCRETE_INDICES: List[int] = _slot_indices(DISCRETE_SLOTS)
CONTINUOUS_INDICES: List[int] = [i for i in range(THETA_DIM) if i not in DISCRETE_INDICES]


def table_hash() -> str:
    """sha256 over the versioned normalization table."""
    payload = json.dumps(
        {"version": THETA_TABLE_VERSION, "slots": STAGE_SLOTS, "ranges": THETA_TABLE},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _normalize(name: str, value: float) -> float:
    low, high = THETA_TABLE[name]
    if not low - 1e-9 <= value <= high + 1e-9:
        raise ParameterDomainError(f"Field '{name}'={value} lies outside its encoding range [{low}, {high}]")
    return (value - low) / (high - low)


def _denormalize(name: str, value: float) -> float:
    low, high = THETA_TABLE[name]
    return low + value * (high - low)


def _encode_stage(stage: StageParams) -> List[float]:
    blur = stage.blur
    if blur is None:
        kernel = [0.0, 0.0, _normalize("k_s", 1.0), 0.0, 0.0, _normalize("theta", 0.0), 0.0, 0.0]
    else:
        kernel = [
            1.0 if blur.kind == "gaussian" else 0.0,
            1.0 if blur.kind == "sinc" else 0.0,
            _normalize("k_s", blur.size),
            _normalize("sigma_x", blur.sigma_x),
            _normalize("sigma_y", blur.sigma_y),
            _normalize("theta", blur.theta),
            _normalize("beta", blur.beta),
            _normalize("omega_c", blur.omega_c),
        ]
    resize = stage.resize.one_hot + [_normalize("s", stage.resize.scale)]
    noise = [
        1.0 if stage.noise.gaussian else 0.0,
        1.0 if stage.noise.color else 0.0,
        _normalize("sigma_g", stage.noise.sigma_g),
        _normalize("lambda", stage.noise.poisson_lambda),
    ]
    jpeg = [1.0 if stage.jpeg.enabled else 0.0, _normalize("q", stage.jpeg.quality)]
    return kernel + resize + noise + jpeg


def encode_theta(params: DegradationParams) -> np.ndarray:
    """
    Encode a degradation as its 36-value vector.

    `StageParams.kernel_noise` has no slot, so decoding the vector yields
    `kernel_noise=0.0` and kernels rebuilt from it are noise free.

    Args:
        params: Valid two-stage degradation

    Returns:
        float64 array of length 36 with every entry in [0, 1]
    """
    return np.array(_encode_stage(params.stage1) + _encode_stage(params.stage2), dtype=np.float64)


@dataclass
class _StageDecoder:
    prefix: str
    values: Sequence[float]
    repairs: List[str] = field(default_factory=list)

    def slot(self, name: str) -> float:
        return float(self.values[STAGE_SLOTS.index(name)])

    def flag(self, name: str) -> bool:
        return self.slot(name) >= 0.5

    def continuous(self, name: str) -> float:
        raw = self.slot(name)
        if not math.isfinite(raw):
            self.repairs.append(f"{self.prefix}.{name}: non-finite value replaced by range minimum")
            raw = 0.0
        clamped = min(max(raw, 0.0), 1.0)
        if clamped != raw:
            self.repairs.append(f"{self.prefix}.{name}: clamped {raw:.6g} into [0, 1]")
        low, high = THETA_TABLE[name]
        return min(max(_denormalize(name, clamped), low), high)

    def lift(self, name: str, value: float, floor: float) -> float:
        if value < floor:
            self.repairs.append(f"{self.prefix}.{name}: raised {value:.6g} to {floor}")
            return floor
        return value

    def zero(self, name: str, value: float, reason: str) -> float:
        if value != 0.0:
            self.repairs.append(f"{self.prefix}.{name}: zeroed ({reason})")
        return 0.0

    def blur(self) -> Optional[BlurKernelSpec]:
        gaussian, sinc = self.flag("k_g"), self.flag("k_c")
        if gaussian and sinc:
            gaussian = self.slot("k_g") >= self.slot("k_c")
            sinc = not gaussian
            self.repairs.append(f"{self.prefix}.kernel_type: both flags set, kept the larger")
        size_raw = self.continuous("k_s")
        size = int(2 * math.floor((size_raw - 1.0) / 2.0 + 0.5) + 1)
        size = min(max(size, 1), 31)
        if size < 3:
            return None

        theta = self.continuous("theta")
        sigma_x, sigma_y = self.continuous("sigma_x"), self.continuous("sigma_y")
        beta, omega_c = self.continuous("beta"), self.continuous("omega_c")
        if sinc:
            for name, value in (("sigma_x", sigma_x), ("sigma_y", sigma_y), ("theta", theta), ("beta", beta)):
                self.zero(name, value, "sinc kernel")
            return BlurKernelSpec.sinc(size=size, omega_c=self.lift("omega_c", omega_c, OMEGA_FLOOR))
        self.zero("omega_c", omega_c, f"{'gaussian' if gaussian else 'plateau'} kernel")
        return BlurKernelSpec(
            kind="gaussian" if gaussian else "plateau",
            size=size,
            sigma_x=self.lift("sigma_x", sigma_x, SIGMA_FLOOR),
            sigma_y=self.lift("sigma_y", sigma_y, SIGMA_FLOOR),
            theta=theta,
            beta=self.lift("beta", beta, BETA_FLOOR),
        )

    def resize(self) -> ResizeSpec:
        one_hot = [self.slot(name) for name in ("r_area", "r_bil", "r_bic")]
        flags = [v >= 0.5 for v in one_hot]
        mode = RESIZE_MODES[int(np.argmax(one_hot))]
        if sum(flags) != 1:
            self.repairs.append(f"{self.prefix}.resize: not one-hot, picked '{mode}' by argmax")
        return ResizeSpec(mode=mode, scale=self.continuous("s"))

    def noise(self) -> NoiseSpec:
        gaussian, color = self.flag("n_t"), self.flag("n_c")
        sigma_g, lam = self.continuous("sigma_g"), self.continuous("lambda")
        if gaussian:
            lam = self.zero("lambda", lam, "gaussian noise")
        else:
            sigma_g = self.zero("sigma_g", sigma_g, "poisson noise")
        return NoiseSpec(gaussian=gaussian, color=color, sigma_g=sigma_g, poisson_lambda=lam)

    def jpeg(self) -> JpegSpec:
        enabled = self.flag("j")
        quality = int(math.floor(self.continuous("q") + 0.5))
        if enabled and quality >= 100:
            self.repairs.append(f"{self.prefix}.q: compressed stage lowered from 100 to 99")
            quality = 99
        if not enabled and quality != 100:
            self.repairs.append(f"{self.prefix}.q: uncompressed stage set to 100")
            quality = 100
        return JpegSpec(enabled=enabled, quality=quality)

    def stage(self) -> StageParams:
        return StageParams(blur=self.blur(), resize=self.resize(), noise=self.noise(), jpeg=self.jpeg())


def decode_theta_with_repairs(vector: Sequence[float], target_sr_scale: int = 4) -> Tuple[DegradationParams, List[str]]:
    """
    Decode a 36-value vector into valid parameters.

    Discrete slots are thresholded at 0.5 (the resize one-hot by argmax),
    continuous slots are clamped to their range and invariants are repaired.

    Args:
        vector: 36 values, typically an Estimator output
        target_sr_scale: SR scale recorded on the decoded parameters

    Returns:
        (params, repairs) where repairs lists every correction applied
    """
    values = np.asarray(vector, dtype=np.float64).reshape(-1)
    if values.size != THETA_DIM:
        raise ShapeMismatchError(f"Theta vector must have {THETA_DIM} entries, got {values.size}")
    first = _StageDecoder("stage1", values[:STAGE_DIM])
    second = _StageDecoder("stage2", values[STAGE_DIM:])
    params = DegradationParams(stage1=first.stage(), stage2=second.stage(), target_sr_scale=target_sr_scale)
    repairs = first.repairs + second.repairs
    for repair in repairs:
        logger.debug(f"Theta decode repair: {repair}")
    return params, repairs


def decode_theta(vector: Sequence[float], target_sr_scale: int = 4) -> DegradationParams:
    """Decode a 36-value vector; see `decode_theta_with_repairs`."""
    params, _ = decode_theta_with_repairs(vector, target_sr_scale)
    return params


def null_theta() -> np.ndarray:
    """Encoding of the all-identity degradation."""
    return encode_theta(DegradationParams.null())
