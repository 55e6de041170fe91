"""
Dataset manifest records.
"""
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from app.schemas.degradation import DegradationParams

MANIFEST_VERSION = 1


class ManifestEntry(BaseModel):
    """One HR/LR pair. Paths are relative to the manifest's directory."""

    id: str = Field(..., min_length=1)
    hr_path: str
    lr_path: str
    theta: List[float] = Field(..., min_length=36, max_length=36, description="Encoded ground-truth degradation")
    params: DegradationParams = Field(..., description="Full parameters, including kernel noise strength")
    seed: int = Field(..., ge=0, description="Per-image degradation seed")
    kernel_path: Optional[str] = Field(None, description="Realized stage-1 kernel as a text grid")


class DatasetManifest(BaseModel):
    """Seed-addressed record of a synthesized dataset."""

    version: int = MANIFEST_VERSION
    preset: str
    degradation_model: Literal["blurry", "two_stage"]
    sr_scale: Literal[2, 4]
    dataset_seed: int = Field(..., ge=0)
    hr_size: Optional[int] = Field(None, description="Side of procedural HR images, if procedural")
    theta_table_version: int
    theta_table_hash: str
    blurry_noise: float = 0.0
    noise_sinc_kernels: bool = False
    entries: List[ManifestEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _unique_ids(self) -> "DatasetManifest":
        ids = [entry.id for entry in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("manifest entry ids must be unique")
        return self
