"""
Retina Locator - Detection and localization metrics
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import DataError
from ..geometry import iou, rescale_annotation, rescale_point, with_boxes
from ..models import Annotation, BBox, Detection, EvalRecord, LANDMARK_CLASSES, LandmarkClass, MetricReport
from ..settings import EvaluationConfig, GeometryConfig

logger = logging.getLogger(__name__)


@dataclass
class ScoredImage:
    """Detections and box ground truth of one image, in one coordinate frame."""

    image_id: str
    detections: List[Detection]
    annotation: Annotation


def _all_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(detections: Sequence[Tuple[str, Detection]], ground_truth: Dict[str, BBox],
                      iou_threshold: float, label: LandmarkClass) -> float:
    """Area under the interpolated precision-recall curve of one class.

    Detections are visited by descending score (input order on ties) and each
    matches the unmatched ground-truth box of its image at IoU >= threshold.
    Without ground truth the AP is 1 when there are no detections, else 0.

    Args:
        detections: (image id, detection) pairs; other classes are ignored
        ground_truth: at most one box of ``label`` per image id
        iou_threshold: match threshold
        label: class to score

    Returns:
        AP in [0, 1]
    """
    dets = [(image_id, d) for image_id, d in detections if d.label is label]
    if not ground_truth:
        return 1.0 if not dets else 0.0
    order = sorted(range(len(dets)), key=lambda i: -dets[i][1].score)
    matched = set()
    hits = np.zeros(len(order))
    for rank, i in enumerate(order):
        image_id, det = dets[i]
        gt = ground_truth.get(image_id)
        if gt is not None and image_id not in matched and iou(det.box, gt) >= iou_threshold:
            matched.add(image_id)
            hits[rank] = 1.0
    true_pos = np.cumsum(hits)
    false_pos = np.cumsum(1.0 - hits)
    recall = true_pos / len(ground_truth)
    precision = true_pos / np.maximum(true_pos + false_pos, 1e-12)
    return _all_point_ap(recall, precision)


def _class_inputs(images: Sequence[ScoredImage], label: LandmarkClass):
    detections = [(img.image_id, d) for img in images for d in img.detections]
    ground_truth = {img.image_id: img.annotation.box(label) for img in images
                    if img.annotation.box(label) is not None}
    return detections, ground_truth


def class_ap_table(images: Sequence[ScoredImage], thresholds: Sequence[float]) -> Dict[LandmarkClass, List[float]]:
    """AP of every class at every threshold."""
    table = {}
    for label in LANDMARK_CLASSES:
        detections, ground_truth = _class_inputs(images, label)
        table[label] = [average_precision(detections, ground_truth, t, label) for t in thresholds]
    return table


def absent_classes(images: Sequence[ScoredImage]) -> List[LandmarkClass]:
    return [label for label in LANDMARK_CLASSES
            if all(img.annotation.box(label) is None for img in images)]


def mean_ap(images: Sequence[ScoredImage], thresholds: Sequence[float]) -> float:
    """AP averaged over thresholds and over the classes present in the ground truth."""
    table = class_ap_table(images, thresholds)
    excluded = absent_classes(images)
    if excluded:
        logger.warning(f"Classes without ground truth excluded from mAP: {[c.value for c in excluded]}")
    scored = [label for label in LANDMARK_CLASSES if label not in excluded] or list(LANDMARK_CLASSES)
    return float(np.mean([np.mean(table[label]) for label in scored]))


def scored_images(records: Sequence[EvalRecord], geometry: Optional[GeometryConfig] = None) -> List[ScoredImage]:
    """Records in working coordinates with ground-truth boxes from the centers, sorted by image id."""
    images = []
    for record in sorted(records, key=lambda r: r.image_id):
        working = rescale_annotation(record.annotation, record.working_width, record.working_height)
        images.append(ScoredImage(record.image_id, list(record.detections), with_boxes(working, geometry)))
    return images


def map_suite(records: Sequence[EvalRecord], thresholds: Optional[Sequence[float]] = None,
              geometry: Optional[GeometryConfig] = None) -> Tuple[float, float, float]:
    """(mAP over 0.50:0.95, mAP at 0.50, mAP at 0.75)."""
    if not records:
        raise DataError("Cannot compute mAP of an empty record set")
    thresholds = list(thresholds or EvaluationConfig().iou_thresholds)
    images = scored_images(records, geometry)
    return mean_ap(images, thresholds), mean_ap(images, [0.5]), mean_ap(images, [0.75])


def image_distances(records: Sequence[EvalRecord], label: LandmarkClass) -> List[Tuple[str, float]]:
    """Native-resolution Euclidean error of every image that has ground truth for ``label``."""
    distances = []
    for record in sorted(records, key=lambda r: r.image_id):
        gt = record.annotation.point(label)
        if gt is None:
            continue
        if not record.annotation.width or not record.annotation.height:
            raise DataError(f"{record.image_id}: native resolution unknown")
        native = record.native_points.get(label)
        if native is None:
            pred = record.predicted_points.get(label)
            if pred is None:
                raise DataError(f"{record.image_id}: no {label.value} prediction")
            native = rescale_point(pred, (record.working_width, record.working_height),
                                   (record.annotation.width, record.annotation.height))
        distances.append((record.image_id, math.hypot(native.x - gt.x, native.y - gt.y)))
    return distances


def mean_euclidean(records: Sequence[EvalRecord], label: LandmarkClass) -> float:
    """Mean distance in native pixels between predicted and true centers."""
    distances = image_distances(records, label)
    if not distances:
        raise DataError(f"No {label.value} ground truth to measure")
    return float(np.mean([d for _, d in distances]))


def evaluate_records(records: Sequence[EvalRecord], evaluation: Optional[EvaluationConfig] = None,
                     geometry: Optional[GeometryConfig] = None) -> MetricReport:
    """Full metric report of a prediction run."""
    if not records:
        raise DataError("No records to evaluate")
    evaluation = evaluation or EvaluationConfig()
    thresholds = list(evaluation.iou_thresholds)
    images = scored_images(records, geometry)
    table = class_ap_table(images, thresholds)
    excluded = absent_classes(images)

    mean_distance, distances, fallback_counts = {}, {}, {}
    for label in LANDMARK_CLASSES:
        fallback_counts[label.value] = sum(1 for r in records if r.fallback.get(label, False))
        if label in excluded:
            continue
        distances[label.value] = image_distances(records, label)
        mean_distance[label.value] = float(np.mean([d for _, d in distances[label.value]]))
    for name, count in fallback_counts.items():
        if count:
            logger.warning(f"{count} {name} predictions came from fallback boxes")

    m5095, m50, m75 = map_suite(records, thresholds, geometry)
    return MetricReport(
        map_50_95=m5095, map_50=m50, map_75=m75,
        per_class_ap={label.value: {f"{t:.2f}": ap for t, ap in zip(thresholds, table[label])}
                      for label in LANDMARK_CLASSES},
        mean_distance=mean_distance, distances=distances, fallback_counts=fallback_counts,
        excluded_classes=[c.value for c in excluded], num_images=len(records),
    )
