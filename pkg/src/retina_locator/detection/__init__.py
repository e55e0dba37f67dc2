"""
Retina Locator - Relation-augmented detection
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from .dedup import DuplicateRemovalHead, classical_nms, duplicate_removal
from .detector import DetectorModel, detect, select_final
from .relation import (
    ObjectSet,
    RelationHead,
    RelationModule,
    geometric_weight,
    relation_augment,
    relation_feature,
    relation_weight,
)
from .training import DetectionSample, train_detector

__all__ = [
    'ObjectSet', 'RelationHead', 'RelationModule', 'geometric_weight', 'relation_weight', 'relation_feature',
    'relation_augment', 'DuplicateRemovalHead', 'duplicate_removal', 'classical_nms',
    'DetectorModel', 'detect', 'select_final', 'DetectionSample', 'train_detector',
]
