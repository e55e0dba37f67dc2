"""
Retina Locator - Relation-augmented anchor detector
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.nn import Conv2d, Linear, Module, Normalizer
from ..autodiff.tensor import Tensor
from ..exceptions import ConfigurationError
from ..geometry import center_to_box, decode_boxes
from ..models import BBox, Detection, LANDMARK_CLASSES, LandmarkClass, LandmarkPoint
from ..settings import RunConfig
from .anchors import AnchorGrid, AnchorTargets
from .dedup import DuplicateRemovalHead, classical_nms, duplicate_removal
from .relation import ObjectSet, RelationModule

logger = logging.getLogger(__name__)

NUM_CLASSES = 1 + len(LANDMARK_CLASSES)
MAX_LOG_SCALE = float(np.log(1000.0 / 16.0))


def bounded_box(coords: Sequence[float], width: float, height: float, min_size: float = 1.0) -> BBox:
    """Clip a box into [0, W] x [0, H], keeping at least ``min_size`` per side."""
    x0, y0, x1, y1 = (float(c) for c in coords)

    def _axis(lo: float, hi: float, limit: float) -> Tuple[float, float]:
        lo, hi = min(max(lo, 0.0), limit), min(max(hi, 0.0), limit)
        if hi - lo < min_size:
            center = min(max((lo + hi) / 2.0, min_size / 2.0), limit - min_size / 2.0)
            lo, hi = center - min_size / 2.0, center + min_size / 2.0
        return lo, hi

    x0, x1 = _axis(x0, x1, width)
    y0, y1 = _axis(y0, y1, height)
    return BBox(x_min=x0, y_min=y0, x_max=x1, y_max=y1)


def decode_clamped(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    deltas = np.array(deltas, dtype=np.float64).reshape(-1, 4)
    deltas[:, 2:] = np.clip(deltas[:, 2:], -MAX_LOG_SCALE, MAX_LOG_SCALE)
    return decode_boxes(anchors, deltas)


@dataclass
class DetectorOutput:
    """Per-anchor predictions of one image.

    Attributes:
        logits: (A, 3) class logits, column 0 is background
        deltas: (A, 4) box deltas relative to the anchors
        features: (A, d_f) appearance features after the relation block
        top_k: anchors that went through the relation block
        anchors: (A, 4) anchor boxes
        width: working width
        height: working height
    """

    logits: Tensor
    deltas: Tensor
    features: Tensor
    top_k: np.ndarray
    anchors: np.ndarray
    width: int
    height: int

    def probabilities(self) -> np.ndarray:
        z = self.logits.data - self.logits.data.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def boxes(self) -> np.ndarray:
        return decode_clamped(self.anchors, self.deltas.data)

    def candidates(self, per_class: int) -> Tuple[List[Detection], np.ndarray]:
        """The ``per_class`` best anchors of each class as detections, with their feature rows."""
        probs = self.probabilities()
        boxes = self.boxes()
        detections: List[Detection] = []
        rows: List[int] = []
        for label in LANDMARK_CLASSES:
            scores = probs[:, label.class_id]
            order = np.argsort(-scores, kind='stable')[:per_class]
            for a in order:
                detections.append(Detection(
                    label=label, score=float(np.clip(scores[a], 0.0, 1.0)),
                    box=bounded_box(boxes[a], self.width, self.height), anchor_index=int(a),
                ))
                rows.append(int(a))
        return detections, self.features.data[rows]

    def raw_best(self) -> Dict[LandmarkClass, Detection]:
        """Highest-probability anchor of each class, flagged as a fallback."""
        probs = self.probabilities()
        boxes = self.boxes()
        best = {}
        for label in LANDMARK_CLASSES:
            a = int(np.argmax(probs[:, label.class_id]))
            best[label] = Detection(label=label, score=float(np.clip(probs[a, label.class_id], 0.0, 1.0)),
                                    box=bounded_box(boxes[a], self.width, self.height),
                                    anchor_index=a, fallback=True)
        return best


class DetectorModel(Module):
    """Four stride-2 convolutions, per-anchor projection, relation block and two heads.

    The relation block and the duplicate-removal head are kept outside the
    module tree so their weights are stored under their own checkpoint
    prefixes (see :meth:`checkpoint_sections`).
    """

    def __init__(self, config: RunConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.working_size = config.imaging.working_size
        channels = config.detector.backbone_channels
        d_f = config.relation.feature_dim

        self.normalizer = self.add_child('norm', Normalizer(3))
        self.convs: List[Conv2d] = []
        prev, size = 3, self.working_size
        for i, c in enumerate(channels):
            self.convs.append(self.add_child(f'conv{i + 1}', Conv2d(prev, c, 3, rng, stride=2, pad=1)))
            prev, size = c, (size - 1) // 2 + 1
        self.feature_size = size
        stride = self.working_size / size
        self.anchor_grid = AnchorGrid.for_classes(size, size, stride, (self.working_size, self.working_size),
                                                  config.geometry)
        templates = self.anchor_grid.num_templates
        self.proj = self.add_child('proj', Conv2d(prev, templates * d_f, 1, rng))
        self.cls_head = self.add_child('cls', Linear(d_f, NUM_CLASSES, rng))
        self.box_head = self.add_child('box', Linear(d_f, 4, rng))
        self.box_head.weight.data = self.box_head.weight.data * 0.01

        eps = config.geometry.geometry_eps
        self.relation: Optional[RelationModule] = None
        self.dr_head: Optional[DuplicateRemovalHead] = None
        if config.relation.enabled:
            self.relation = RelationModule(config.relation, rng, eps)
            if config.detector.duplicate_removal == 'learned':
                self.dr_head = DuplicateRemovalHead(config.relation, rng, eps)

    def checkpoint_sections(self) -> Dict[str, Module]:
        sections: Dict[str, Module] = {'detector.': self}
        if self.relation is not None:
            sections['relation.'] = self.relation
        if self.dr_head is not None:
            sections['relation.dr.'] = self.dr_head
        return sections

    def detector_parameters(self):
        """Named parameters trained by the detection loss (everything but the DR head)."""
        params = list(self.named_parameters('detector.'))
        if self.relation is not None:
            params += list(self.relation.named_parameters('relation.'))
        return params

    def forward(self, image_chw: np.ndarray) -> DetectorOutput:
        """Run the network on a (3, S, S) working-resolution image in [0, 1].

        Raises:
            ConfigurationError: if the image is not at the model's working size
        """
        image_chw = np.asarray(image_chw)
        if image_chw.shape != (3, self.working_size, self.working_size):
            raise ConfigurationError(
                f"Detector expects a 3x{self.working_size}x{self.working_size} image, got {image_chw.shape}"
            )
        dtype = self.cls_head.weight.dtype
        x = Tensor(self.normalizer(image_chw), dtype=dtype)
        for conv in self.convs:
            x = T.relu(conv(x))
        maps = T.relu(self.proj(x))
        d_f = self.config.relation.feature_dim
        features = T.reshape(T.transpose(maps, (1, 2, 0)), (-1, d_f))
        anchors = self.anchor_grid.boxes

        with T.no_tape():
            pre_logits = self.cls_head(features.detach()).data
            pre_deltas = self.box_head(features.detach()).data
        z = pre_logits - pre_logits.max(axis=1, keepdims=True)
        pre_probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        foreground = pre_probs[:, 1:].max(axis=1)
        top_k = np.argsort(-foreground, kind='stable')[:self.config.relation.top_k]

        if self.relation is not None:
            boxes = decode_clamped(anchors[top_k], pre_deltas[top_k])
            refined = self.relation(ObjectSet(T.take_rows(features, top_k), boxes)).features
            features = T.put_rows(features, top_k, refined)

        return DetectorOutput(
            logits=self.cls_head(features), deltas=self.box_head(features), features=features,
            top_k=top_k, anchors=anchors, width=self.working_size, height=self.working_size,
        )


def detector_loss(output: DetectorOutput, targets: AnchorTargets, rng: np.random.Generator,
                  neg_pos_ratio: int = 3) -> Tuple[Tensor, Dict[str, float]]:
    """Cross-entropy over positives plus sampled negatives, smooth-L1 over positives.

    At most ``neg_pos_ratio * max(#pos, 1)`` negatives are drawn. The box
    term is normalized by max(#pos, 1) and is exactly 0 without positives.
    """
    pos = targets.positives
    neg = targets.negatives
    n_neg = min(len(neg), neg_pos_ratio * max(len(pos), 1))
    sampled = np.sort(rng.choice(neg, size=n_neg, replace=False)) if n_neg else np.array([], dtype=np.int64)
    rows = np.concatenate([pos, sampled]).astype(np.int64)

    dtype = output.logits.dtype
    cls_loss = (T.cross_entropy(T.take_rows(output.logits, rows), targets.labels[rows])
                if len(rows) else Tensor(0.0, dtype=dtype))
    if len(pos):
        box_loss = T.smooth_l1(T.take_rows(output.deltas, pos), targets.deltas[pos]) * (1.0 / len(pos))
    else:
        box_loss = Tensor(0.0, dtype=dtype)
    total = cls_loss + box_loss
    return total, {'cls': float(cls_loss.data), 'box': float(box_loss.data), 'positives': int(len(pos))}


def default_detection(label: LandmarkClass, width: int, height: int, config: RunConfig) -> Detection:
    center = LandmarkPoint(x=width / 2.0, y=height / 2.0, label=label)
    return Detection(label=label, score=0.0, box=center_to_box(center, (width, height), config.geometry),
                     fallback=True)


def select_final(detections: List[Detection], width: int, height: int, config: Optional[RunConfig] = None,
                 raw_best: Optional[Dict[LandmarkClass, Detection]] = None) -> Dict[LandmarkClass, Detection]:
    """Exactly one detection per class.

    The highest score wins (first one on ties). A class without detections
    falls back to ``raw_best``, then to a centered box with score 0; both
    fallbacks are flagged.
    """
    config = config or RunConfig()
    final: Dict[LandmarkClass, Detection] = {}
    for label in LANDMARK_CLASSES:
        best = None
        for det in detections:
            if det.label is label and (best is None or det.score > best.score):
                best = det
        if best is None:
            raw = (raw_best or {}).get(label)
            if raw is not None:
                best = raw.model_copy(update={'fallback': True})
            else:
                best = default_detection(label, width, height, config)
            logger.warning(f"No {label.value} detection left, using fallback box {best.box.as_tuple()}")
        final[label] = best
    return final


def postprocess(model: DetectorModel, output: DetectorOutput) -> List[Detection]:
    """Candidates after duplicate removal and the score floor."""
    det_cfg = model.config.detector
    candidates, features = output.candidates(det_cfg.dr_top_n)
    if det_cfg.duplicate_removal == 'nms':
        kept = classical_nms(candidates, det_cfg.nms_iou)
    else:
        kept = duplicate_removal(candidates, features, model.dr_head, gate_open=model.dr_head is None)
    return [d for d in kept if d.score >= det_cfg.min_score]


def detect(model: DetectorModel, image_chw: np.ndarray) -> Tuple[Dict[LandmarkClass, Detection], List[Detection]]:
    """Full first stage on one image: (final detection per class, surviving candidates)."""
    with T.no_tape():
        output = model.forward(image_chw)
    kept = postprocess(model, output)
    final = select_final(kept, output.width, output.height, model.config, output.raw_best())
    return final, kept
