"""
Retina Locator - Duplicate removal
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.nn import Linear, Module
from ..autodiff.tensor import Tensor
from ..geometry import iou, iou_matrix
from ..models import Detection, LandmarkClass
from ..settings import RelationConfig
from .relation import ObjectSet, RelationModule, sinusoidal_embedding

logger = logging.getLogger(__name__)


def rank_order(scores: Sequence[float]) -> np.ndarray:
    """Rank of each score, 0 for the highest; ties go to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    ranks = np.empty(len(scores), dtype=np.int64)
    ranks[order] = np.arange(len(scores))
    return ranks


class DuplicateRemovalHead(Module):
    """Learned rescoring gate over the candidates of one class.

    Rank embedding and appearance feature are projected to a common width,
    refined by one relation block and squashed to a keep probability.
    """

    def __init__(self, config: RelationConfig, rng: np.random.Generator, geometry_eps: float = 1e-3):
        super().__init__()
        d_f = config.feature_dim
        self.rank_dim = config.geo_dim
        self.rank_proj = self.add_child('rank', Linear(self.rank_dim, d_f, rng, bias=False))
        self.feat_proj = self.add_child('feat', Linear(d_f, d_f, rng, bias=False))
        single = config.model_copy(update={'num_modules': 1})
        self.relation = self.add_child('block', RelationModule(single, rng, geometry_eps))
        self.gate = self.add_child('gate', Linear(d_f, 1, rng))

    def forward(self, features: Tensor, boxes: np.ndarray, scores: Sequence[float]) -> Tensor:
        """Gate logits (K, 1) for K same-class candidates."""
        ranks = rank_order(scores)
        emb = Tensor(sinusoidal_embedding(ranks, self.rank_dim), dtype=features.dtype)
        mixed = T.relu(self.rank_proj(emb) + self.feat_proj(features))
        refined = self.relation(ObjectSet(mixed, boxes)).features
        return self.gate(refined)


def duplicate_targets(boxes: np.ndarray, gt_box: Optional[np.ndarray], pos_iou: float = 0.5) -> np.ndarray:
    """1 for the single best-IoU candidate of a ground-truth box (IoU >= pos_iou), else 0."""
    targets = np.zeros(len(boxes))
    if gt_box is None or not len(boxes):
        return targets
    overlaps = iou_matrix(boxes, np.asarray(gt_box).reshape(1, 4))[:, 0]
    best = int(np.argmax(overlaps))
    if overlaps[best] >= pos_iou:
        targets[best] = 1.0
    return targets


def duplicate_removal_loss(head: DuplicateRemovalHead, features: Tensor, boxes: np.ndarray,
                           scores: Sequence[float], targets: np.ndarray) -> Tensor:
    return T.binary_cross_entropy_with_logits(head(features, boxes, scores), targets)


def duplicate_removal(detections: List[Detection], features: Union[Tensor, np.ndarray],
                      dr_head: Optional[DuplicateRemovalHead], gate_open: bool = False) -> List[Detection]:
    """Rescore detections: score <- score * keep probability, per class.

    Args:
        detections: candidates, one row of ``features`` each
        features: (len(detections), d_f) appearance features
        dr_head: trained head, or None to leave scores unchanged
        gate_open: force every gate to 1

    Returns:
        New detections in input order
    """
    if dr_head is None or gate_open or not detections:
        return [d.model_copy() for d in detections]
    data = features.data if isinstance(features, Tensor) else np.asarray(features)
    rescored = list(detections)
    groups: Dict[LandmarkClass, List[int]] = {}
    for i, det in enumerate(detections):
        groups.setdefault(det.label, []).append(i)
    with T.no_tape():
        for label, idx in groups.items():
            boxes = np.array([detections[i].box.as_tuple() for i in idx])
            scores = [detections[i].score for i in idx]
            logits = dr_head(Tensor(data[idx], dtype=dr_head.gate.weight.dtype), boxes, scores)
            keep = np.exp(-np.logaddexp(0.0, -logits.data.reshape(-1)))
            for i, p in zip(idx, keep):
                rescored[i] = detections[i].model_copy(update={'score': float(np.clip(detections[i].score * p, 0, 1))})
    return rescored


def classical_nms(detections: List[Detection], iou_threshold: float = 0.5) -> List[Detection]:
    """Greedy per-class suppression of boxes overlapping a kept one by IoU > threshold.

    Kept detections come back in score-descending order; ties keep the lower
    input index first.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept: List[Detection] = []
    for i in order:
        det = detections[i]
        if all(k.label is not det.label or iou(k.box, det.box) <= iou_threshold for k in kept):
            kept.append(det)
    return kept
