"""
Retina Locator - Qualitative overlays
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from typing import Dict, Optional, Union

import numpy as np
from PIL import Image as PILImage, ImageDraw

from ..imaging.image import Image
from ..models import Annotation, BBox, Detection, LANDMARK_CLASSES, LandmarkClass, LandmarkPoint

logger = logging.getLogger(__name__)

GT_COLOR = (255, 0, 0)
PRED_COLOR = (0, 255, 0)
STROKE = 3
MARKER_RADIUS = 4

Prediction = Dict[LandmarkClass, Union[LandmarkPoint, Detection]]


def _draw_marks(draw: ImageDraw.ImageDraw, box: Optional[BBox], point: Optional[LandmarkPoint], color):
    if box is not None:
        draw.rectangle(box.as_tuple(), outline=color, width=STROKE)
    if point is not None:
        r = MARKER_RADIUS
        draw.line((point.x - r, point.y, point.x + r, point.y), fill=color, width=STROKE)
        draw.line((point.x, point.y - r, point.x, point.y + r), fill=color, width=STROKE)


def render_overlay(img: Image, gt: Optional[Annotation] = None,
                   pred: Optional[Prediction] = None,
                   pred_boxes: Optional[Dict[LandmarkClass, Detection]] = None) -> Image:
    """Draw ground truth in red, then predictions in green on top.

    Boxes are outlined and centers marked with a cross, all with 3-px
    strokes. Coordinates must be in the frame of ``img``.

    Args:
        img: Image to draw on (gray images are expanded to RGB)
        gt: Ground-truth annotation; its boxes are drawn when present
        pred: Predicted points (or detections, whose box centers are marked)
        pred_boxes: Optional predicted boxes drawn alongside ``pred``

    Returns:
        New RGB image of the same size
    """
    rgb = img.to_rgb()
    canvas = PILImage.fromarray(np.rint(rgb.pixels * 255.0).astype(np.uint8))
    draw = ImageDraw.Draw(canvas)

    if gt is not None:
        for label in LANDMARK_CLASSES:
            _draw_marks(draw, gt.box(label), gt.point(label), GT_COLOR)

    pred = pred or {}
    pred_boxes = pred_boxes or {}
    for label in LANDMARK_CLASSES:
        item = pred.get(label)
        box = pred_boxes.get(label)
        point = item
        if isinstance(item, Detection):
            box = box or item.box
            cx, cy = item.box.center
            point = LandmarkPoint(x=cx, y=cy, label=label)
        _draw_marks(draw, box.box if isinstance(box, Detection) else box, point, PRED_COLOR)

    return Image(np.asarray(canvas, dtype=np.float64) / 255.0)
