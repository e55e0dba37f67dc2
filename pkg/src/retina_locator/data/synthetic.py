"""
Retina Locator - Synthetic fundus generator
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Images show a bright disc and a darker fovea displaced from it toward the
image center (with a small angular jitter) by a near-constant multiple of the
disc radius, so the two landmarks keep a stable relative geometry.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image as PILImage, ImageDraw

from ..exceptions import ConfigurationError
from ..geometry import with_boxes
from ..imaging.image import Image, save_image
from ..models import Annotation, LandmarkClass, LandmarkPoint
from ..settings import GeometryConfig, SynthConfig
from .dataset import write_unified_csv

logger = logging.getLogger(__name__)

# Fundus-like color of an intensity map
TINT = np.array([1.0, 0.62, 0.36])
DISC_GAIN = 0.42
FOVEA_DEPTH = 0.2
VESSEL_DEPTH = 0.12
VIGNETTE = 0.25
MAX_LAYOUT_ATTEMPTS = 100


@dataclass(frozen=True)
class SynthLayout:
    """Landmark geometry of one synthetic image."""

    disc_x: float
    disc_y: float
    radius: float
    fovea_x: float
    fovea_y: float
    distance: float
    angle_deg: float


def _check_fits(config: SynthConfig):
    reach = config.fovea_distance_mean * config.disc_radius_max + 2 * config.disc_radius_max
    if 2 * config.disc_radius_max + 2 >= min(config.width, config.height) or reach >= config.width:
        raise ConfigurationError(
            f"Synthetic {config.width}x{config.height} frame cannot hold a disc of radius "
            f"{config.disc_radius_max} with its fovea {config.fovea_distance_mean} radii away"
        )


def sample_layout(config: SynthConfig, rng: np.random.Generator) -> SynthLayout:
    """Draw a disc radius and position, then place the fovea relative to the disc.

    The offset starts on the unit vector from the disc toward the image
    center and is rotated by a Normal(0, angle std) angle; its length is
    Normal(mean, std) in units of the disc radius. Layouts whose fovea
    leaves the frame are redrawn.

    Raises:
        ConfigurationError: if no layout fits the frame
    """
    _check_fits(config)
    cx, cy = (config.width - 1) / 2.0, (config.height - 1) / 2.0
    for _ in range(MAX_LAYOUT_ATTEMPTS):
        radius = float(rng.uniform(config.disc_radius_min, config.disc_radius_max))
        distance = float(rng.normal(config.fovea_distance_mean, config.fovea_distance_std)) * radius
        angle = float(rng.normal(0.0, config.fovea_angle_std_deg))
        margin = radius + 2.0
        disc_x = round(float(rng.uniform(margin, config.width - 1 - margin)), 3)
        disc_y = round(float(rng.uniform(margin, config.height - 1 - margin)), 3)
        if distance <= 0:
            continue

        to_center = np.array([cx - disc_x, cy - disc_y])
        norm = float(np.hypot(*to_center))
        ux, uy = (to_center / norm) if norm > 1e-9 else (1.0, 0.0)
        theta = math.radians(angle)
        dx = distance * (ux * math.cos(theta) - uy * math.sin(theta))
        dy = distance * (ux * math.sin(theta) + uy * math.cos(theta))
        fovea_x, fovea_y = round(disc_x + dx, 3), round(disc_y + dy, 3)
        if not (2.0 <= fovea_x <= config.width - 3.0 and 2.0 <= fovea_y <= config.height - 3.0):
            continue
        return SynthLayout(disc_x=disc_x, disc_y=disc_y, radius=radius, fovea_x=fovea_x, fovea_y=fovea_y,
                           distance=distance, angle_deg=angle)
    raise ConfigurationError(f"No synthetic layout fits a {config.width}x{config.height} frame "
                             f"after {MAX_LAYOUT_ATTEMPTS} attempts")


def _texture(config: SynthConfig, rng: np.random.Generator, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    field = np.zeros_like(xs)
    for _ in range(config.texture_waves):
        freq = rng.uniform(0.01, 0.05)
        theta = rng.uniform(0, math.pi)
        phase = rng.uniform(0, 2 * math.pi)
        field += np.sin(freq * (xs * math.cos(theta) + ys * math.sin(theta)) + phase)
    if config.texture_waves:
        field *= config.texture_amplitude / config.texture_waves
    return field


def _vessels(config: SynthConfig, layout: SynthLayout, rng: np.random.Generator) -> np.ndarray:
    """Curved dark strokes leaving the disc rim, as a [0, 1] mask."""
    mask = PILImage.new('L', (config.width, config.height), 0)
    draw = ImageDraw.Draw(mask)
    for _ in range(config.vessel_strokes):
        start_angle = rng.uniform(0, 2 * math.pi)
        length = rng.uniform(0.3, 0.7) * max(config.width, config.height)
        bend = rng.uniform(-0.6, 0.6)
        p0 = np.array([layout.disc_x, layout.disc_y]) + layout.radius * np.array(
            [math.cos(start_angle), math.sin(start_angle)])
        heading = start_angle + rng.uniform(-0.4, 0.4)
        p2 = p0 + length * np.array([math.cos(heading), math.sin(heading)])
        p1 = (p0 + p2) / 2 + bend * length * np.array([-math.sin(heading), math.cos(heading)])
        t = np.linspace(0.0, 1.0, 48)[:, None]
        curve = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2
        width = int(rng.integers(1, 4))
        draw.line([tuple(p) for p in curve], fill=255, width=width)
    return np.asarray(mask, dtype=np.float64) / 255.0


def render_fundus(config: SynthConfig, layout: SynthLayout, rng: np.random.Generator) -> Image:
    """Render one RGB image for a layout."""
    ys, xs = np.mgrid[0:config.height, 0:config.width].astype(np.float64)
    intensity = config.background_level + _texture(config, rng, xs, ys)

    rho2 = (xs - layout.disc_x) ** 2 + (ys - layout.disc_y) ** 2
    r = layout.radius
    # a broad disc plus a narrow peak keeps the brightest pixel at the center
    intensity += DISC_GAIN * (0.6 * np.exp(-rho2 / (2 * (0.5 * r) ** 2)) + 0.4 * np.exp(-rho2 / (2 * (0.15 * r) ** 2)))
    fovea2 = (xs - layout.fovea_x) ** 2 + (ys - layout.fovea_y) ** 2
    intensity -= FOVEA_DEPTH * np.exp(-fovea2 / (2 * (0.8 * r) ** 2))

    if config.vessel_strokes:
        intensity -= VESSEL_DEPTH * _vessels(config, layout, rng)

    cx, cy = (config.width - 1) / 2.0, (config.height - 1) / 2.0
    radial = ((xs - cx) ** 2 + (ys - cy) ** 2) / (cx ** 2 + cy ** 2)
    intensity *= 1.0 - VIGNETTE * radial

    if config.noise > 0:
        intensity += rng.normal(0.0, config.noise, size=intensity.shape)
    return Image.from_array(intensity[:, :, None] * TINT)


def sample_layouts(config: SynthConfig, n: int, rng: Optional[np.random.Generator] = None) -> List[SynthLayout]:
    """Landmark geometry only, for checking the offset distribution."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    return [sample_layout(config, rng) for _ in range(n)]


def generate_synthetic(config: SynthConfig, n: int,
                       geometry: Optional[GeometryConfig] = None) -> List[Tuple[Image, Annotation]]:
    """Generate ``n`` (image, native annotation) pairs, fully determined by ``config.seed``.

    Centers are rounded to three decimals so they survive the CSV round trip.
    """
    rng = np.random.default_rng(config.seed)
    pairs = []
    for i in range(n):
        layout = sample_layout(config, rng)
        image = render_fundus(config, layout, rng)
        ann = Annotation(
            image_id=f"synth_{i:04d}", width=config.width, height=config.height,
            optic_disc=LandmarkPoint(x=layout.disc_x, y=layout.disc_y, label=LandmarkClass.OPTIC_DISC),
            fovea=LandmarkPoint(x=layout.fovea_x, y=layout.fovea_y, label=LandmarkClass.FOVEA),
        )
        pairs.append((image, with_boxes(ann, geometry)))
    return pairs


def split_counts(n: int, test_fraction: float) -> Tuple[int, int]:
    """(train, test) sizes; the first images form the training split."""
    n_test = int(round(n * test_fraction))
    return n - n_test, n_test


def write_synthetic_dataset(out_dir: Union[str, Path], config: SynthConfig, n: int,
                            geometry: Optional[GeometryConfig] = None) -> Path:
    """Write ``images/*.png``, ``train.csv``, ``test.csv`` and ``annotations.csv``.

    Returns:
        The dataset directory
    """
    out_dir = Path(out_dir)
    image_dir = out_dir / 'images'
    image_dir.mkdir(parents=True, exist_ok=True)
    pairs = generate_synthetic(config, n, geometry)
    for image, ann in pairs:
        save_image(image, image_dir / f"{ann.image_id}.png")

    annotations = [ann for _, ann in pairs]
    n_train, n_test = split_counts(n, config.test_fraction)
    write_unified_csv(out_dir / 'annotations.csv', annotations)
    write_unified_csv(out_dir / 'train.csv', annotations[:n_train])
    write_unified_csv(out_dir / 'test.csv', annotations[n_train:])
    logger.info(f"Wrote {n} synthetic images to {out_dir} ({n_train} train / {n_test} test)")
    return out_dir
