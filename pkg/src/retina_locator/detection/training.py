"""
Retina Locator - Detector training loop
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..autodiff.optim import ParamStore, sgd_step
from ..autodiff.tensor import Tape, Tensor, backward
from ..evaluation.metrics import ScoredImage, mean_ap
from ..exceptions import DataError
from ..imaging.image import Image
from ..imaging.transforms import random_augment
from ..models import Annotation, LANDMARK_CLASSES
from ..settings import RunConfig
from .anchors import assign_targets, gt_arrays
from .dedup import duplicate_removal_loss, duplicate_targets
from .detector import DetectorModel, DetectorOutput, detect, detector_loss

logger = logging.getLogger(__name__)


@dataclass
class DetectionSample:
    """Preprocessed working-resolution image with its ground-truth boxes."""

    image: Image
    annotation: Annotation


def _dr_backward(model: DetectorModel, output: DetectorOutput, annotation: Annotation, config: RunConfig) -> float:
    """Accumulate duplicate-removal gradients for one image; returns the loss."""
    candidates, features = output.candidates(config.detector.dr_top_n)
    dtype = model.dr_head.gate.weight.dtype
    with Tape() as tape:
        total = None
        for label in LANDMARK_CLASSES:
            idx = [i for i, d in enumerate(candidates) if d.label is label]
            boxes = np.array([candidates[i].box.as_tuple() for i in idx])
            gt = annotation.box(label)
            targets = duplicate_targets(boxes, np.array(gt.as_tuple()) if gt else None, config.detector.pos_iou)
            loss = duplicate_removal_loss(model.dr_head, Tensor(features[idx], dtype=dtype), boxes,
                                          [candidates[i].score for i in idx], targets)
            total = loss if total is None else total + loss
    backward(total, tape)
    return float(total.data)


def _apply(store: ParamStore, pending: int, config: RunConfig):
    det = config.detector
    store.ensure_grads()
    store.scale_grads(1.0 / pending)
    sgd_step(store, det.lr, det.momentum, det.weight_decay)
    store.zero_grad()


def detection_map50(model: DetectorModel, samples: Sequence[DetectionSample]) -> float:
    """mAP at IoU 0.5 of the final per-class detections."""
    images = []
    for i, sample in enumerate(samples):
        final, _ = detect(model, sample.image.to_chw())
        images.append(ScoredImage(sample.annotation.image_id or str(i), list(final.values()), sample.annotation))
    return mean_ap(images, [0.5])


def train_detector(model: DetectorModel, samples: Sequence[DetectionSample], config: RunConfig,
                   rng: Optional[np.random.Generator] = None,
                   val_samples: Optional[Sequence[DetectionSample]] = None,
                   log_path: Optional[Union[str, Path]] = None) -> List[Dict[str, Any]]:
    """Train the detector (and its duplicate-removal head) with momentum SGD.

    Every epoch visits the samples in a seeded random order, augments each,
    and steps after ``detector.batch_size`` images. One JSON line per epoch
    (epoch, loss, val_mAP50) is appended to ``log_path`` when given.

    Returns:
        The per-epoch log entries

    Raises:
        DataError: if there are no training samples
    """
    if not samples:
        raise DataError("Cannot train the detector on an empty dataset")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    det = config.detector
    store = ParamStore(model.detector_parameters())
    dr_store = ParamStore(model.dr_head.named_parameters('relation.dr.')) if model.dr_head is not None else None
    log_file = Path(log_path) if log_path else None
    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        log_file.write_text('')

    logger.info(f"Training detector on {len(samples)} images for {det.epochs} epochs "
                f"(relation {'on' if model.relation is not None else 'off'})")
    history = []
    for epoch in range(1, det.epochs + 1):
        total, dr_total, pending = 0.0, 0.0, 0
        store.zero_grad()
        if dr_store:
            dr_store.zero_grad()
        for i in rng.permutation(len(samples)):
            image, annotation = samples[i].image, samples[i].annotation
            if config.augment.enabled:
                image, annotation, _ = random_augment(image, annotation, rng, config.augment)
            gt_boxes, gt_labels = gt_arrays(annotation)
            targets = assign_targets(model.anchor_grid.boxes, gt_boxes, gt_labels, det.pos_iou, det.neg_iou)
            with Tape() as tape:
                output = model.forward(image.to_chw())
                loss, _ = detector_loss(output, targets, rng, det.neg_pos_ratio)
            backward(loss, tape)
            total += loss.item()
            if dr_store:
                dr_total += _dr_backward(model, output, annotation, config)
            pending += 1
            if pending == det.batch_size:
                _apply(store, pending, config)
                if dr_store:
                    _apply(dr_store, pending, config)
                pending = 0
        if pending:
            _apply(store, pending, config)
            if dr_store:
                _apply(dr_store, pending, config)

        entry: Dict[str, Any] = {'epoch': epoch, 'loss': total / len(samples)}
        if dr_store:
            entry['dr_loss'] = dr_total / len(samples)
        if val_samples:
            entry['val_mAP50'] = detection_map50(model, val_samples)
        history.append(entry)
        logger.info(f"epoch {epoch}/{det.epochs} loss={entry['loss']:.4f}"
                    + (f" val_mAP50={entry['val_mAP50']:.3f}" if 'val_mAP50' in entry else ''))
        if log_file:
            with open(log_file, 'a') as f:
                f.write(json.dumps(entry) + '\n')
    return history
