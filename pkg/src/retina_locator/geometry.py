"""
Retina Locator - Box and point geometry
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Points and boxes share one continuous frame: an image of width W spans
x in [0, W] and rescaling multiplies coordinates by the size ratio.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import GeometryError
from .models import Annotation, BBox, LandmarkClass, LandmarkPoint
from .settings import GeometryConfig

BoxLike = Union[BBox, Sequence[float], np.ndarray]
SizeLike = Union[int, float, Tuple[float, float]]


def _as_array(box: BoxLike) -> np.ndarray:
    if isinstance(box, BBox):
        return np.array(box.as_tuple(), dtype=np.float64)
    arr = np.asarray(box, dtype=np.float64)
    if arr.shape != (4,):
        raise GeometryError(f"Expected 4 box coordinates, got shape {arr.shape}")
    return arr


def _size(size: SizeLike) -> Tuple[float, float]:
    if isinstance(size, (tuple, list)):
        w, h = size
    else:
        w = h = size
    if w <= 0 or h <= 0:
        raise GeometryError(f"Sizes must be positive, got {size}")
    return float(w), float(h)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def class_half_size(label: LandmarkClass, working_size: SizeLike,
                    config: Optional[GeometryConfig] = None) -> Tuple[float, float]:
    """Half width/height of the ground-truth box prior at a working resolution."""
    config = config or GeometryConfig()
    w, h = _size(working_size)
    half = config.od_half_size if label is LandmarkClass.OPTIC_DISC else config.fovea_half_size
    return half * w / config.reference_size, half * h / config.reference_size


def point_in_bounds(x: float, y: float, width: float, height: float) -> bool:
    return 0.0 <= x <= width and 0.0 <= y <= height


def clip_box(box: BoxLike, width: float, height: float) -> BBox:
    """Clip a box to the image frame [0, W] x [0, H]."""
    x0, y0, x1, y1 = _as_array(box)
    x0, x1 = min(max(x0, 0.0), width), min(max(x1, 0.0), width)
    y0, y1 = min(max(y0, 0.0), height), min(max(y1, 0.0), height)
    return BBox(x_min=x0, y_min=y0, x_max=x1, y_max=y1)


def center_to_box(p: LandmarkPoint, working_size: SizeLike,
                  config: Optional[GeometryConfig] = None) -> BBox:
    """Synthesize the ground-truth box of a landmark center.
    
    Args:
        p: Landmark center in working coordinates
        working_size: Working resolution, a side length or (width, height)
        config: Half-size priors (defaults: disc 48 px, fovea 40 px at 512)
    
    Returns:
        Square box around ``p`` clipped to the image
    
    Raises:
        GeometryError: if the point lies outside the image
    """
    w, h = _size(working_size)
    if not point_in_bounds(p.x, p.y, w, h):
        raise GeometryError(f"{p.label.value} point ({p.x}, {p.y}) outside {w:g}x{h:g} image")
    hw, hh = class_half_size(p.label, (w, h), config)
    return clip_box((p.x - hw, p.y - hh, p.x + hw, p.y + hh), w, h)


def rescale_point(p: LandmarkPoint, from_size: SizeLike, to_size: SizeLike) -> LandmarkPoint:
    """Map a point between resolutions: x' = x * to_w / from_w, y' = y * to_h / from_h."""
    fw, fh = _size(from_size)
    tw, th = _size(to_size)
    return LandmarkPoint(x=p.x * (tw / fw), y=p.y * (th / fh), label=p.label)


def rescale_box(box: BBox, from_size: SizeLike, to_size: SizeLike) -> BBox:
    fw, fh = _size(from_size)
    tw, th = _size(to_size)
    sx, sy = tw / fw, th / fh
    return BBox(x_min=box.x_min * sx, y_min=box.y_min * sy, x_max=box.x_max * sx, y_max=box.y_max * sy)


def rescale_annotation(ann: Annotation, to_width: int, to_height: int) -> Annotation:
    """Express an annotation in another resolution of the same image."""
    src, dst = (ann.width, ann.height), (to_width, to_height)
    update = {'width': to_width, 'height': to_height}
    for label in (LandmarkClass.OPTIC_DISC, LandmarkClass.FOVEA):
        point, box = ann.point(label), ann.box(label)
        key = 'optic_disc' if label is LandmarkClass.OPTIC_DISC else 'fovea'
        update[key] = rescale_point(point, src, dst) if point is not None else None
        update[f'{key}_box'] = rescale_box(box, src, dst) if box is not None else None
    return Annotation(image_id=ann.image_id, **update)


def with_boxes(ann: Annotation, config: Optional[GeometryConfig] = None) -> Annotation:
    """Fill both ground-truth boxes from the centers at the annotation's resolution."""
    size = (ann.width, ann.height)
    od_box = center_to_box(ann.optic_disc, size, config) if ann.optic_disc is not None else None
    fovea_box = center_to_box(ann.fovea, size, config) if ann.fovea is not None else None
    return ann.model_copy(update={'optic_disc_box': od_box, 'fovea_box': fovea_box})


def encode_boxes(anchors: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized (N, 4) anchor/target pairs to (dcx/w_a, dcy/h_a, log w/w_a, log h/h_a)."""
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 4)
    wa, ha = anchors[:, 2] - anchors[:, 0], anchors[:, 3] - anchors[:, 1]
    if np.any(wa <= 0) or np.any(ha <= 0):
        raise GeometryError("Anchors must have positive width and height")
    wt, ht = targets[:, 2] - targets[:, 0], targets[:, 3] - targets[:, 1]
    if np.any(wt <= 0) or np.any(ht <= 0):
        raise GeometryError("Targets must have positive width and height")
    cxa, cya = anchors[:, 0] + 0.5 * wa, anchors[:, 1] + 0.5 * ha
    cxt, cyt = targets[:, 0] + 0.5 * wt, targets[:, 1] + 0.5 * ht
    return np.stack([(cxt - cxa) / wa, (cyt - cya) / ha, np.log(wt / wa), np.log(ht / ha)], axis=1)


def decode_boxes(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Inverse of :func:`encode_boxes`."""
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    wa, ha = anchors[:, 2] - anchors[:, 0], anchors[:, 3] - anchors[:, 1]
    if np.any(wa <= 0) or np.any(ha <= 0):
        raise GeometryError("Anchors must have positive width and height")
    cx = anchors[:, 0] + 0.5 * wa + deltas[:, 0] * wa
    cy = anchors[:, 1] + 0.5 * ha + deltas[:, 1] * ha
    w = wa * np.exp(deltas[:, 2])
    h = ha * np.exp(deltas[:, 3])
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def encode_box(anchor: BoxLike, target: BoxLike) -> np.ndarray:
    return encode_boxes(_as_array(anchor)[None], _as_array(target)[None])[0]


def decode_box(anchor: BoxLike, deltas: Sequence[float]) -> BBox:
    return BBox.from_coords(decode_boxes(_as_array(anchor)[None], np.asarray(deltas)[None])[0])


def pairwise_relative_geometry(boxes: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Relative geometry of every ordered pair.
    
    Entry ``[m, n]`` is :func:`relative_geometry` of box m with respect to box n.
    Only differences and ratios enter, so the result is invariant to a joint
    translation or uniform scaling of all boxes.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    if np.any(w <= 0) or np.any(h <= 0):
        raise GeometryError("Boxes must have positive width and height")
    cx = (boxes[:, 0] + boxes[:, 2]) / 2.0
    cy = (boxes[:, 1] + boxes[:, 3]) / 2.0
    dx = np.log(np.abs(cx[:, None] - cx[None, :]) / w[None, :] + eps)
    dy = np.log(np.abs(cy[:, None] - cy[None, :]) / h[None, :] + eps)
    dw = np.log(w[:, None] / w[None, :])
    dh = np.log(h[:, None] / h[None, :])
    return np.stack([dx, dy, dw, dh], axis=-1)


def relative_geometry(m: BoxLike, n: BoxLike, eps: float = 1e-3) -> np.ndarray:
    """Log-ratio geometry of box m relative to box n (4-vector)."""
    return pairwise_relative_geometry(np.stack([_as_array(m), _as_array(n)]), eps)[0, 1]
