"""
Retina Locator - Run configuration schema
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import hashlib
import json
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryConfig(_Section):
    """Ground-truth box priors, given at ``reference_size`` and scaled with the working size."""

    od_half_size: float = Field(default=48.0, gt=0)
    fovea_half_size: float = Field(default=40.0, gt=0)
    reference_size: int = Field(default=512, gt=0)
    geometry_eps: float = Field(default=1e-3, gt=0)


class ImagingConfig(_Section):
    working_size: int = Field(default=128, ge=16)
    clahe_tiles_x: int = Field(default=8, ge=1)
    clahe_tiles_y: int = Field(default=8, ge=1)
    clahe_clip_limit: float = Field(default=0.01, gt=0, le=1.0)
    clahe_bins: int = Field(default=256, ge=2)
    crop_size: int = Field(default=64, ge=8)


class AugmentConfig(_Section):
    """Sampling ranges for random_augment; a zero-width range disables that component."""

    enabled: bool = True
    translate: float = Field(default=0.05, ge=0, lt=0.5)
    shear_deg: float = Field(default=5.0, ge=0, lt=45)
    scale_min: float = Field(default=0.9, gt=0)
    scale_max: float = Field(default=1.1, gt=0)
    hflip_prob: float = Field(default=0.5, ge=0, le=1)
    max_attempts: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _scale_order(self) -> "AugmentConfig":
        if self.scale_max < self.scale_min:
            raise ValueError("augment.scale_max must be >= augment.scale_min")
        return self


class RelationConfig(_Section):
    enabled: bool = True
    feature_dim: int = Field(default=128, gt=0)
    num_heads: int = Field(default=4, gt=0)
    key_dim: int = Field(default=32, gt=0)
    geo_dim: int = Field(default=64, gt=0)
    top_k: int = Field(default=16, gt=0)
    num_modules: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _divisible(self) -> "RelationConfig":
        if self.feature_dim % self.num_heads:
            raise ValueError("relation.feature_dim must be divisible by relation.num_heads")
        if self.geo_dim % 8:
            raise ValueError("relation.geo_dim must be a multiple of 8")
        return self


class DetectorConfig(_Section):
    backbone_channels: List[int] = Field(default_factory=lambda: [16, 32, 64, 128])
    epochs: int = Field(default=8, ge=1)
    lr: float = Field(default=1e-3, ge=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=2, ge=1)
    pos_iou: float = Field(default=0.5, gt=0, le=1)
    neg_iou: float = Field(default=0.3, ge=0, le=1)
    neg_pos_ratio: int = Field(default=3, ge=1)
    min_score: float = Field(default=0.01, ge=0, le=1)
    duplicate_removal: Literal["learned", "nms"] = "learned"
    nms_iou: float = Field(default=0.5, gt=0, le=1)
    dr_top_n: int = Field(default=16, ge=1)

    @model_validator(mode="after")
    def _backbone(self) -> "DetectorConfig":
        if len(self.backbone_channels) != 4:
            raise ValueError("detector.backbone_channels must list 4 conv widths (stride 16)")
        if self.neg_iou > self.pos_iou:
            raise ValueError("detector.neg_iou must not exceed detector.pos_iou")
        return self


class RegressorConfig(_Section):
    channels: List[int] = Field(default_factory=lambda: [16, 32])
    steps: int = Field(default=500, ge=1)
    batch_size: int = Field(default=8, ge=2)
    lr: float = Field(default=1e-3, ge=0)
    jitter: float = Field(default=0.1, ge=0, lt=0.5)
    crop_context: float = Field(default=1.5, ge=1.0)
    head_pool: Literal["gap", "flatten"] = "gap"
    log_every: int = Field(default=50, ge=1)


class BaselineConfig(_Section):
    channels: List[int] = Field(default_factory=lambda: [8, 16, 32, 32])
    steps: int = Field(default=500, ge=1)
    batch_size: int = Field(default=4, ge=1)
    lr: float = Field(default=1e-3, ge=0)
    log_every: int = Field(default=50, ge=1)


class SynthConfig(_Section):
    """Synthetic fundus generator parameters (native resolution pixels)."""

    width: int = Field(default=384, ge=32)
    height: int = Field(default=256, ge=32)
    disc_radius_min: float = Field(default=18.0, gt=0)
    disc_radius_max: float = Field(default=26.0, gt=0)
    fovea_distance_mean: float = Field(default=2.4, gt=0)
    fovea_distance_std: float = Field(default=0.2, ge=0)
    fovea_angle_std_deg: float = Field(default=10.0, ge=0)
    background_level: float = Field(default=0.45, ge=0, le=0.8)
    texture_amplitude: float = Field(default=0.05, ge=0, le=0.2)
    texture_waves: int = Field(default=4, ge=0)
    vessel_strokes: int = Field(default=6, ge=0)
    noise: float = Field(default=0.02, ge=0)
    test_fraction: float = Field(default=0.2, ge=0, lt=1)
    seed: int = 0

    @model_validator(mode="after")
    def _radius_order(self) -> "SynthConfig":
        if self.disc_radius_max < self.disc_radius_min:
            raise ValueError("synth.disc_radius_max must be >= synth.disc_radius_min")
        return self


class EvaluationConfig(_Section):
    iou_thresholds: List[float] = Field(
        default_factory=lambda: [round(0.5 + 0.05 * i, 2) for i in range(10)]
    )


class RunConfig(_Section):
    """Every tunable of a run; unknown keys are rejected."""

    seed: int = 0
    precision: Literal["float32", "float64"] = "float32"
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    imaging: ImagingConfig = Field(default_factory=ImagingConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    relation: RelationConfig = Field(default_factory=RelationConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    regressor: RegressorConfig = Field(default_factory=RegressorConfig)
    baseline: BaselineConfig = Field(default_factory=BaselineConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
