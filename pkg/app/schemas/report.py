"""
Evaluation report records.

PSNR of identical images is +inf; JSON carries it as the string "Infinity".
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ImageMetrics(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    id: str
    psnr: float
    ssim: float
    theta_mse: float
    kernel_mse: Optional[float] = None
    lr_psnr: Optional[float] = None
    bicubic_psnr: Optional[float] = None
    baseline_theta_mse: Optional[float] = None


class MetricSummary(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="strings")

    mean: float
    std: float
    count: int


class EvalReport(BaseModel):
    """Per-image metrics plus aggregates recomputable from the rows."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    manifest: str
    checkpoint_hash: str
    config_hash: str
    use_gt_degradation: bool = False
    iterations: int
    shave: int = 0
    y_range: str = Field(default="studio", description="'studio' (16-235) or 'full' BT.601 luma")
    rows: List[ImageMetrics] = Field(default_factory=list)
    aggregates: Dict[str, MetricSummary] = Field(default_factory=dict)
