"""
Architecture hyperparameters of the unfolded network.
"""
import hashlib
import json
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class DanConfig(BaseModel):
    """Shape and behaviour switches of the Restorer/Estimator network.

    Flags:
        learnable_init: theta0 is trained (otherwise a frozen zero vector)
        feature_space_iteration: alternate in feature space; when off, both tails
            run every iteration and their outputs are re-encoded by the heads
        jacobi_update: update SR and degradation features from the previous
            iterate; when off, estimate first and restore with the fresh estimate
        calibrated_tails: carry one extra image tail and theta tail per iteration
        zero_init_tails: start the last tail layers at zero
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    sr_scale: Literal[2, 4] = 4
    iterations: int = Field(default=3, ge=1)
    feature_channels: int = Field(default=32, ge=1)
    restorer_blocks: int = Field(default=4, ge=0)
    estimator_blocks: int = Field(default=4, ge=0)
    theta_dim: Literal[36] = 36
    theta_feature_dim: int = Field(default=64, ge=1)
    tail_theta_hidden: int = Field(default=64, ge=1)
    leaky_slope: float = Field(default=0.2, ge=0.0)
    learnable_init: bool = True
    feature_space_iteration: bool = True
    jacobi_update: bool = True
    calibrated_tails: bool = False
    zero_init_tails: bool = False

    @classmethod
    def desk(cls, sr_scale: int = 2, **overrides) -> "DanConfig":
        values = dict(sr_scale=sr_scale, feature_channels=32, restorer_blocks=4)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def paper(cls, sr_scale: int = 4, **overrides) -> "DanConfig":
        values = dict(sr_scale=sr_scale, feature_channels=64, restorer_blocks=16)
        values.update(overrides)
        return cls(**values)

    @property
    def min_input_size(self) -> int:
        """Smallest LR side the Estimator's pooling depth accepts."""
        return 2 ** self.estimator_blocks

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()
