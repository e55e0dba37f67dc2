"""
Retina Locator - Center regression
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from .regressor import CropRegressorModel, DirectRegressorModel, predict_direct, regress_center
from .training import (
    CropSampler,
    CropSource,
    FixedCrops,
    detection_crop_box,
    train_direct_baseline,
    train_regressor,
)

__all__ = [
    'CropRegressorModel', 'DirectRegressorModel', 'regress_center', 'predict_direct',
    'CropSource', 'CropSampler', 'FixedCrops', 'detection_crop_box', 'train_regressor', 'train_direct_baseline',
]
