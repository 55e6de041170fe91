"""
Pydantic models describing degradations.

A degradation is two stages of blur -> resize -> noise -> JPEG. Each stage
maps onto an 18-value slice of the 36-value theta vector regressed by the
Estimator (see `app.core.degradation.theta_codec`).
"""
import math
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

KernelKind = Literal["gaussian", "plateau", "sinc"]
ResizeMode = Literal["area", "bilinear", "bicubic"]

RESIZE_MODES: List[str] = ["area", "bilinear", "bicubic"]


class BlurKernelSpec(BaseModel):
    """Parameters of one analytic blur kernel."""

    model_config = ConfigDict(frozen=True)

    kind: KernelKind
    size: int = Field(ge=3, description="Odd kernel side length in pixels")
    sigma_x: float = Field(default=0.0, ge=0.0)
    sigma_y: float = Field(default=0.0, ge=0.0)
    theta: float = Field(default=0.0, ge=-math.pi, le=math.pi, description="Rotation in radians")
    beta: float = Field(default=0.0, ge=0.0, description="Shape parameter")
    omega_c: float = Field(default=0.0, ge=0.0, le=math.pi, description="Cutoff in radians/pixel")

    @model_validator(mode="after")
    def _check_invariants(self) -> "BlurKernelSpec":
        if self.size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.size}")
        if self.kind == "sinc":
            if self.sigma_x or self.sigma_y or self.theta or self.beta:
                raise ValueError("sinc kernels store sigma_x = sigma_y = theta = beta = 0")
            if not 0.0 < self.omega_c <= math.pi:
                raise ValueError(f"omega_c must lie in (0, pi], got {self.omega_c}")
        else:
            if self.omega_c != 0.0:
                raise ValueError(f"{self.kind} kernels store omega_c = 0")
            if self.sigma_x <= 0 or self.sigma_y <= 0 or self.beta <= 0:
                raise ValueError("sigma_x, sigma_y and beta must be positive")
        return self

    @classmethod
    def gaussian(cls, size: int, sigma_x: float, sigma_y: float, theta: float = 0.0, beta: float = 1.0) -> "BlurKernelSpec":
        return cls(kind="gaussian", size=size, sigma_x=sigma_x, sigma_y=sigma_y, theta=theta, beta=beta)

    @classmethod
    def plateau(cls, size: int, sigma_x: float, sigma_y: float, theta: float = 0.0, beta: float = 1.0) -> "BlurKernelSpec":
        return cls(kind="plateau", size=size, sigma_x=sigma_x, sigma_y=sigma_y, theta=theta, beta=beta)

    @classmethod
    def sinc(cls, size: int, omega_c: float) -> "BlurKernelSpec":
        return cls(kind="sinc", size=size, omega_c=omega_c)


class ResizeSpec(BaseModel):
    """Resampling mode and output/input size ratio."""

    model_config = ConfigDict(frozen=True)

    mode: ResizeMode = "area"
    scale: float = Field(default=1.0, gt=0.0)

    @property
    def one_hot(self) -> List[float]:
        return [1.0 if m == self.mode else 0.0 for m in RESIZE_MODES]


class NoiseSpec(BaseModel):
    """Additive noise; `gaussian` is n_t and `color` is n_c."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    gaussian: bool = True
    color: bool = True
    sigma_g: float = Field(default=0.0, ge=0.0, description="Gaussian std in [0, 1] image units")
    poisson_lambda: float = Field(default=0.0, ge=0.0, alias="lambda", description="Poisson noise level")

    @model_validator(mode="after")
    def _check_invariants(self) -> "NoiseSpec":
        if self.gaussian and self.poisson_lambda != 0.0:
            raise ValueError("Gaussian noise stores lambda = 0")
        if not self.gaussian and self.sigma_g != 0.0:
            raise ValueError("Poisson noise stores sigma_g = 0")
        return self

    @property
    def is_identity(self) -> bool:
        return self.sigma_g == 0.0 and self.poisson_lambda == 0.0


class JpegSpec(BaseModel):
    """JPEG roundtrip switch and quality factor."""

    model_config = ConfigDict(frozen=True)

    enabled: bool = False
    quality: int = Field(default=100, ge=1, le=100)

    @model_validator(mode="after")
    def _check_invariants(self) -> "JpegSpec":
        if self.enabled and not 1 <= self.quality < 100:
            raise ValueError(f"compressed images need quality in [1, 100), got {self.quality}")
        if not self.enabled and self.quality != 100:
            raise ValueError("uncompressed images store quality = 100")
        return self


class StageParams(BaseModel):
    """One blur -> resize -> noise -> JPEG stage.

    `blur=None` is the pulse (identity) kernel. `kernel_noise` is the strength
    of the multiplicative kernel perturbation; it is not part of theta.
    """

    model_config = ConfigDict(frozen=True)

    blur: Optional[BlurKernelSpec] = None
    resize: ResizeSpec = Field(default_factory=ResizeSpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    jpeg: JpegSpec = Field(default_factory=JpegSpec)
    kernel_noise: float = Field(default=0.0, ge=0.0, le=1.0)

    @classmethod
    def identity(cls) -> "StageParams":
        return cls()

    @property
    def is_identity(self) -> bool:
        return (
            self.blur is None
            and self.resize.scale == 1.0
            and self.noise.is_identity
            and not self.jpeg.enabled
        )


class DegradationParams(BaseModel):
    """Full two-stage degradation plus the SR scale it targets."""

    model_config = ConfigDict(frozen=True)

    stage1: StageParams = Field(default_factory=StageParams)
    stage2: StageParams = Field(default_factory=StageParams)
    target_sr_scale: Literal[2, 4] = 4

    @classmethod
    def null(cls, target_sr_scale: int = 4) -> "DegradationParams":
        return cls(stage1=StageParams.identity(), stage2=StageParams.identity(), target_sr_scale=target_sr_scale)


class DegradationRecord(BaseModel):
    """JSON form written by `degrade --emit-theta` and `estimate`.

    Either field may be omitted on input: `params` wins when both are given
    (it also carries the kernel noise strength), otherwise `theta` is decoded.
    """

    params: Optional[DegradationParams] = None
    theta: Optional[List[float]] = Field(default=None, min_length=36, max_length=36)
    table_version: int = 1
    model: Optional[Literal["blurry", "two_stage"]] = None
    seed: Optional[int] = Field(default=None, ge=0, description="Image seed of the pixel and kernel noise streams")
    repairs: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _has_degradation(self) -> "DegradationRecord":
        if self.params is None and self.theta is None:
            raise ValueError("a degradation record needs params or theta")
        return self
