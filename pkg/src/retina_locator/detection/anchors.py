"""
Retina Locator - Anchor grid and target assignment
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..geometry import class_half_size, encode_boxes, iou_matrix
from ..models import Annotation, LANDMARK_CLASSES
from ..settings import GeometryConfig

logger = logging.getLogger(__name__)

IGNORE = -1
BACKGROUND = 0


class AnchorGrid:
    """Square templates repeated over the cells of a feature map.

    Anchors are ordered cell-major (row, then column) and template-minor, so
    anchor ``a`` sits in cell ``a // num_templates``.
    """

    def __init__(self, feature_width: int, feature_height: int, stride: float,
                 templates: Sequence[Tuple[float, float]]):
        self.feature_width = feature_width
        self.feature_height = feature_height
        self.stride = stride
        self.templates = [tuple(map(float, t)) for t in templates]
        self.boxes = self._build()

    @classmethod
    def for_classes(cls, feature_width: int, feature_height: int, stride: float,
                    working_size: Tuple[int, int], config: Optional[GeometryConfig] = None) -> 'AnchorGrid':
        """One template per landmark class, sized like its ground-truth box prior."""
        templates = []
        for label in LANDMARK_CLASSES:
            hw, hh = class_half_size(label, working_size, config)
            templates.append((2 * hw, 2 * hh))
        return cls(feature_width, feature_height, stride, templates)

    @property
    def num_templates(self) -> int:
        return len(self.templates)

    def __len__(self) -> int:
        return len(self.boxes)

    def _build(self) -> np.ndarray:
        rows, cols = np.meshgrid(np.arange(self.feature_height), np.arange(self.feature_width), indexing='ij')
        cx = ((cols.ravel() + 0.5) * self.stride)[:, None]
        cy = ((rows.ravel() + 0.5) * self.stride)[:, None]
        tw = np.array([t[0] for t in self.templates])[None, :]
        th = np.array([t[1] for t in self.templates])[None, :]
        boxes = np.stack([cx - tw / 2, cy - th / 2, cx + tw / 2, cy + th / 2], axis=-1)
        return boxes.reshape(-1, 4)


@dataclass
class AnchorTargets:
    """Per-anchor class (-1 ignore, 0 background, else class id) and box-delta targets."""

    labels: np.ndarray
    deltas: np.ndarray
    matched: np.ndarray

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.labels > BACKGROUND)

    @property
    def negatives(self) -> np.ndarray:
        return np.flatnonzero(self.labels == BACKGROUND)


def gt_arrays(ann: Annotation) -> Tuple[np.ndarray, np.ndarray]:
    """(G, 4) ground-truth boxes and their (G,) class ids."""
    boxes: List[Tuple[float, ...]] = []
    labels: List[int] = []
    for label in LANDMARK_CLASSES:
        box = ann.box(label)
        if box is not None:
            boxes.append(box.as_tuple())
            labels.append(label.class_id)
    return np.array(boxes, dtype=np.float64).reshape(-1, 4), np.array(labels, dtype=np.int64)


def assign_targets(anchors: np.ndarray, gt_boxes: np.ndarray, gt_labels: Sequence[int],
                   pos_iou: float = 0.5, neg_iou: float = 0.3) -> AnchorTargets:
    """Match anchors to ground truth.

    An anchor is positive at IoU >= ``pos_iou`` with its best box, negative
    below ``neg_iou`` and ignored in between. Afterwards every ground-truth box,
    in order, claims its best anchor. Positives carry encode_box deltas.
    """
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_labels = np.asarray(gt_labels, dtype=np.int64)
    num = len(anchors)
    labels = np.full(num, IGNORE, dtype=np.int64)
    deltas = np.zeros((num, 4))
    matched = np.full(num, -1, dtype=np.int64)
    if not len(gt_boxes):
        labels[:] = BACKGROUND
        return AnchorTargets(labels, deltas, matched)

    overlaps = iou_matrix(anchors, gt_boxes)
    best_gt = overlaps.argmax(axis=1)
    best_iou = overlaps.max(axis=1)
    labels[best_iou < neg_iou] = BACKGROUND
    positive = best_iou >= pos_iou
    labels[positive] = gt_labels[best_gt[positive]]
    matched[positive] = best_gt[positive]
    for g in range(len(gt_boxes)):
        a = int(overlaps[:, g].argmax())
        labels[a] = gt_labels[g]
        matched[a] = g

    pos = np.flatnonzero(labels > BACKGROUND)
    if len(pos):
        deltas[pos] = encode_boxes(anchors[pos], gt_boxes[matched[pos]])
    return AnchorTargets(labels, deltas, matched)
