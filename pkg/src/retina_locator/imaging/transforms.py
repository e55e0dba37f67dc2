"""
Retina Locator - Affine augmentation and crop extraction
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..exceptions import GeometryError
from ..geometry import clip_box, point_in_bounds
from ..models import Annotation, BBox, LANDMARK_CLASSES, LandmarkClass, LandmarkPoint
from ..settings import AugmentConfig
from .image import Image

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix mapping source (x, y, 1) to destination (x, y)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape == (3, 3):
            m = m[:2]
        if m.shape != (2, 3):
            raise GeometryError(f"Affine matrix must be 2x3, got {m.shape}")
        if abs(np.linalg.det(m[:, :2])) <= 1e-9:
            raise GeometryError("Affine transform is not invertible")
        object.__setattr__(self, 'matrix', m)

    @classmethod
    def identity(cls) -> 'AffineTransform':
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> 'AffineTransform':
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]]))

    @property
    def matrix3(self) -> np.ndarray:
        return np.vstack([self.matrix, [0.0, 0.0, 1.0]])

    def then(self, other: 'AffineTransform') -> 'AffineTransform':
        """Apply ``self`` first, then ``other``."""
        return AffineTransform(other.matrix3 @ self.matrix3)

    def inverse(self) -> 'AffineTransform':
        return AffineTransform(np.linalg.inv(self.matrix3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) points."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def apply_point(self, x: float, y: float) -> Tuple[float, float]:
        px, py = self.apply(np.array([[x, y]]))[0]
        return float(px), float(py)

    def apply_box(self, box: BBox) -> np.ndarray:
        """Enclosing (x_min, y_min, x_max, y_max) of the mapped box corners."""
        corners = np.array([[box.x_min, box.y_min], [box.x_max, box.y_min],
                            [box.x_min, box.y_max], [box.x_max, box.y_max]])
        mapped = self.apply(corners)
        return np.concatenate([mapped.min(axis=0), mapped.max(axis=0)])


def sample_bilinear(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear samples of (h, w, c) pixels at float coordinates; outside reads 0."""
    h, w = pixels.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    out = np.zeros(xs.shape + (pixels.shape[2],))
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            taps = pixels[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            out += (wy * wx * valid)[..., None] * taps
    return out


def warp(img: Image, affine: AffineTransform, out_w: Optional[int] = None, out_h: Optional[int] = None) -> Image:
    """Resample ``img`` under ``affine`` by inverse mapping (outside is black)."""
    out_w = out_w or img.width
    out_h = out_h or img.height
    if np.array_equal(affine.matrix, np.eye(3)[:2]) and (out_w, out_h) == img.size:
        return Image(img.pixels.copy())
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    src = affine.inverse().apply(np.stack([xs.ravel(), ys.ravel()], axis=1))
    sampled = sample_bilinear(img.pixels, src[:, 0].reshape(out_h, out_w), src[:, 1].reshape(out_h, out_w))
    return Image.from_array(sampled)


def transform_annotation(ann: Annotation, affine: AffineTransform) -> Optional[Annotation]:
    """Map an annotation through ``affine`` in its own frame.

    Returns:
        The mapped annotation, or None if a landmark leaves the frame
    """
    update = {}
    for label in LANDMARK_CLASSES:
        key = 'optic_disc' if label is LandmarkClass.OPTIC_DISC else 'fovea'
        point, box = ann.point(label), ann.box(label)
        if point is None:
            continue
        x, y = affine.apply_point(point.x, point.y)
        if not point_in_bounds(x, y, ann.width, ann.height):
            return None
        update[key] = LandmarkPoint(x=x, y=y, label=label)
        if box is not None:
            try:
                update[f'{key}_box'] = clip_box(affine.apply_box(box), ann.width, ann.height)
            except GeometryError:
                return None
    try:
        return Annotation.model_validate({**dict(ann), **update})
    except GeometryError:
        return None


def sample_affine(rng: np.random.Generator, width: int, height: int, config: AugmentConfig) -> AffineTransform:
    """Translation, shear, scale and horizontal flip about the image center."""
    tx = rng.uniform(-config.translate, config.translate) * width
    ty = rng.uniform(-config.translate, config.translate) * height
    shear = np.deg2rad(rng.uniform(-config.shear_deg, config.shear_deg))
    scale = rng.uniform(config.scale_min, config.scale_max)
    flip = rng.random() < config.hflip_prob

    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    to_origin = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    scaling = np.diag([scale, scale, 1.0])
    shearing = np.array([[1.0, np.tan(shear), 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    flipping = np.diag([-1.0 if flip else 1.0, 1.0, 1.0])
    back = np.array([[1.0, 0.0, cx + tx], [0.0, 1.0, cy + ty], [0.0, 0.0, 1.0]])
    return AffineTransform(back @ flipping @ shearing @ scaling @ to_origin)


def random_augment(img: Image, ann: Annotation, rng: np.random.Generator,
                   config: Optional[AugmentConfig] = None) -> Tuple[Image, Annotation, AffineTransform]:
    """Randomly warp an image and its annotation with one shared matrix.

    Draws are repeated while a landmark would leave the frame; after
    ``max_attempts`` failures the identity is used.

    Args:
        img: working-resolution image
        ann: annotation in the same frame as ``img``
        rng: random generator (consumed)
        config: sampling ranges

    Returns:
        (warped image, mapped annotation, applied transform)
    """
    config = config or AugmentConfig()
    if (ann.width, ann.height) != img.size:
        raise GeometryError(f"Annotation frame {ann.width}x{ann.height} does not match image {img.width}x{img.height}")
    for _ in range(config.max_attempts):
        affine = sample_affine(rng, img.width, img.height, config)
        mapped = transform_annotation(ann, affine)
        if mapped is not None:
            return warp(img, affine), mapped, affine
    logger.debug(f"{ann.image_id}: no augmentation kept landmarks in frame, using identity")
    return Image(img.pixels.copy()), ann, AffineTransform.identity()


@dataclass(frozen=True)
class Crop:
    """A resampled box region and the map from normalized crop space to the image.

    ``affine`` sends (u, v) in [0, 1]^2 to image coordinates, so (0.5, 0.5) is
    the box center.
    """

    image: Image
    affine: AffineTransform
    box: BBox

    def to_image(self, u: float, v: float) -> Tuple[float, float]:
        return self.affine.apply_point(u, v)

    def from_image(self, x: float, y: float) -> Tuple[float, float]:
        return self.affine.inverse().apply_point(x, y)


def crop(img: Image, box: BBox, out_size: int = 64) -> Crop:
    """Sample ``box`` to an ``out_size`` square; outside the image is black.

    Crop pixel k samples the image at ``x_min + k * width / out_size``, so an
    integer-aligned box at out_size equal to its width copies pixels exactly and
    the box (0, 0, W, H) reproduces a W x H image.

    Raises:
        GeometryError: if the box has no area
    """
    bw, bh = box.x_max - box.x_min, box.y_max - box.y_min
    if bw <= 0 or bh <= 0:
        raise GeometryError(f"Cannot crop a box without area: {box.as_tuple()}")
    steps = np.arange(out_size) / out_size
    xs = box.x_min + steps * bw
    ys = box.y_min + steps * bh
    grid_y, grid_x = np.meshgrid(ys, xs, indexing='ij')
    pixels = sample_bilinear(img.pixels, grid_x, grid_y)
    affine = AffineTransform(np.array([[bw, 0.0, box.x_min], [0.0, bh, box.y_min]]))
    return Crop(image=Image.from_array(pixels), affine=affine, box=box)
