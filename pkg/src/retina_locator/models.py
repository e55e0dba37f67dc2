"""
Retina Locator - Data models
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import GeometryError

# Containment checks tolerate rounding from affine maps and CSV precision
_CONTAIN_TOL = 1e-6


class LandmarkClass(str, Enum):
    """Retinal landmarks located by the pipeline."""
    OPTIC_DISC = "optic_disc"
    FOVEA = "fovea"

    @property
    def class_id(self) -> int:
        """Detector label index (0 is background)."""
        return 1 if self is LandmarkClass.OPTIC_DISC else 2

    @property
    def short_name(self) -> str:
        """Prefix used in CSV columns and checkpoint names."""
        return "od" if self is LandmarkClass.OPTIC_DISC else "fovea"

    @classmethod
    def from_class_id(cls, class_id: int) -> "LandmarkClass":
        if class_id == 1:
            return cls.OPTIC_DISC
        if class_id == 2:
            return cls.FOVEA
        raise ValueError(f"No landmark class for label {class_id}")


LANDMARK_CLASSES: Tuple[LandmarkClass, LandmarkClass] = (LandmarkClass.OPTIC_DISC, LandmarkClass.FOVEA)


class LandmarkPoint(BaseModel):
    """Landmark center in continuous pixel coordinates (origin at the top-left pixel center)."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    label: LandmarkClass

    @model_validator(mode="after")
    def _finite(self) -> "LandmarkPoint":
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"Landmark coordinates must be finite, got ({self.x}, {self.y})")
        return self


class BBox(BaseModel):
    """Axis-aligned box in continuous pixel coordinates."""

    model_config = ConfigDict(frozen=True)

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @model_validator(mode="after")
    def _positive_area(self) -> "BBox":
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise GeometryError(f"Box coordinates must be finite, got {coords}")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise GeometryError(f"Box must have positive area, got {coords}")
        return self

    @classmethod
    def from_coords(cls, coords) -> "BBox":
        x_min, y_min, x_max, y_max = (float(c) for c in coords)
        return cls(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def contains(self, x: float, y: float, tol: float = _CONTAIN_TOL) -> bool:
        return (self.x_min - tol <= x <= self.x_max + tol
                and self.y_min - tol <= y <= self.y_max + tol)


class Annotation(BaseModel):
    """Ground truth of one image.
    
    Coordinates refer to a ``width`` x ``height`` frame; annotations loaded
    from disk use the native resolution of the image.
    """

    image_id: str
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    optic_disc: Optional[LandmarkPoint] = None
    fovea: Optional[LandmarkPoint] = None
    optic_disc_box: Optional[BBox] = None
    fovea_box: Optional[BBox] = None

    @model_validator(mode="after")
    def _boxes_contain_points(self) -> "Annotation":
        for label in LANDMARK_CLASSES:
            point, box = self.point(label), self.box(label)
            if point is not None and point.label is not label:
                raise GeometryError(f"{self.image_id}: {label.value} point carries label {point.label.value}")
            if point is not None and box is not None and not box.contains(point.x, point.y):
                raise GeometryError(
                    f"{self.image_id}: {label.value} box {box.as_tuple()} does not contain ({point.x}, {point.y})"
                )
        return self

    def point(self, label: LandmarkClass) -> Optional[LandmarkPoint]:
        return self.optic_disc if label is LandmarkClass.OPTIC_DISC else self.fovea

    def box(self, label: LandmarkClass) -> Optional[BBox]:
        return self.optic_disc_box if label is LandmarkClass.OPTIC_DISC else self.fovea_box

    def present_classes(self) -> List[LandmarkClass]:
        return [label for label in LANDMARK_CLASSES if self.point(label) is not None]


class Detection(BaseModel):
    """Scored box handed from the detector to the regressors."""

    label: LandmarkClass
    score: float = Field(ge=0.0, le=1.0)
    box: BBox
    anchor_index: Optional[int] = None
    fallback: bool = False


class DatasetRecord(BaseModel):
    """One image on disk with its native-resolution annotation."""

    image_path: str
    native_width: int = Field(gt=0)
    native_height: int = Field(gt=0)
    annotation: Annotation
    missing: List[LandmarkClass] = Field(default_factory=list)

    @property
    def image_id(self) -> str:
        return self.annotation.image_id


class EvalRecord(BaseModel):
    """Ground truth and predictions of one evaluated image.
    
    Detections and predicted points are in working-resolution coordinates;
    ``working_width``/``working_height`` make the rescale to native reproducible.
    ``native_points``, when given, are used as is instead of rescaling.
    """

    image_id: str
    annotation: Annotation
    working_width: int = Field(gt=0)
    working_height: int = Field(gt=0)
    detections: List[Detection] = Field(default_factory=list)
    predicted_points: Dict[LandmarkClass, LandmarkPoint] = Field(default_factory=dict)
    native_points: Dict[LandmarkClass, LandmarkPoint] = Field(default_factory=dict)
    fallback: Dict[LandmarkClass, bool] = Field(default_factory=dict)


class MetricReport(BaseModel):
    """Detection and localization metrics over a set of EvalRecords."""

    map_50_95: float = Field(ge=0.0, le=1.0)
    map_50: float = Field(ge=0.0, le=1.0)
    map_75: float = Field(ge=0.0, le=1.0)
    per_class_ap: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    mean_distance: Dict[str, float] = Field(default_factory=dict)
    distances: Dict[str, List[Tuple[str, float]]] = Field(default_factory=dict)
    fallback_counts: Dict[str, int] = Field(default_factory=dict)
    excluded_classes: List[str] = Field(default_factory=list)
    num_images: int = 0

    @field_validator("per_class_ap")
    @classmethod
    def _ap_range(cls, value: Dict[str, Dict[str, float]]) -> Dict[str, Dict[str, float]]:
        for label, table in value.items():
            for threshold, ap in table.items():
                if not 0.0 <= ap <= 1.0:
                    raise ValueError(f"AP for {label}@{threshold} outside [0, 1]: {ap}")
        return value
