"""
Training configuration.
"""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class TrainConfig(BaseModel):
    """Optimization schedule, batch geometry and loss weighting."""

    model_config = ConfigDict(extra="forbid")

    lr0: float = Field(default=2e-4, gt=0)
    halve_every: int = Field(default=5000, ge=1)
    total_steps: int = Field(default=20000, ge=0)
    batch: int = Field(default=8, ge=1)
    lr_patch: int = Field(default=32, ge=1)
    theta_loss_weight: float = Field(default=1.0, ge=0)
    theta_loss: Literal["l2", "mixed"] = "l2"
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = Field(default=0, ge=0)
    augment: bool = False
    threads: int = Field(default=1, ge=1, description="Data-parallel replicas")
    log_every: int = Field(default=100, ge=1)
    val_every: int = Field(default=0, ge=0, description="Validation PSNR period in steps; 0 disables")
    val_images: int = Field(default=4, ge=1)
    init_seed: int = Field(default=0, ge=0)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        values = dict(halve_every=5000, total_steps=20000, batch=8, lr_patch=32)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def paper(cls, **overrides) -> "TrainConfig":
        values = dict(halve_every=200000, total_steps=600000, batch=64, lr_patch=48)
        values.update(overrides)
        return cls(**values)
