"""
Retina Locator - Optic disc and fovea localization with a relation-augmented detector
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

__version__ = "0.1.0"
__author__ = "Retina Locator Team"
__description__ = "Two-stage optic disc and fovea localization: relation-augmented detection, then crop regression"

from .models import Annotation, BBox, Detection, LandmarkClass, LandmarkPoint
from .settings import RunConfig
from .pipeline import LandmarkLocator

__all__ = ["LandmarkLocator", "RunConfig", "Annotation", "BBox", "Detection", "LandmarkClass", "LandmarkPoint"]
