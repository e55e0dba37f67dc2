"""
Retina Locator - Image type, I/O and resampling
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Pixel (col, row) has its center at continuous coordinate (col, row); x grows
rightward and y downward.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from ..exceptions import ConfigurationError, DataError

logger = logging.getLogger(__name__)

_RANGE_TOL = 1e-6


@dataclass(frozen=True)
class Image:
    """(height, width, channels) float pixels in [0, 1], channels 1 or 3."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3) or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"Image pixels must be (h, w, 1|3), got shape {arr.shape}")
        if arr.size and (arr.min() < -_RANGE_TOL or arr.max() > 1 + _RANGE_TOL or not np.all(np.isfinite(arr))):
            raise DataError(f"Image pixels must lie in [0, 1], got [{arr.min()}, {arr.max()}]")
        object.__setattr__(self, 'pixels', np.clip(arr, 0.0, 1.0))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> 'Image':
        """Build an image from any float array, clamping to [0, 1]."""
        return cls(np.clip(np.nan_to_num(np.asarray(arr, dtype=np.float64)), 0.0, 1.0))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def size(self) -> Tuple[int, int]:
        return self.width, self.height

    def to_chw(self) -> np.ndarray:
        """Pixels as a (channels, height, width) array for the networks."""
        return np.ascontiguousarray(self.pixels.transpose(2, 0, 1))

    def to_rgb(self) -> 'Image':
        if self.channels == 3:
            return self
        return Image(np.repeat(self.pixels, 3, axis=2))


def load_image(path: Union[str, Path]) -> Image:
    """Read an 8-bit PNG (RGB or gray) or binary PPM into [0, 1] floats.

    Raises:
        DataError: if the file is missing or not a readable image
    """
    path = Path(path)
    try:
        with PILImage.open(path) as pil:
            mode = 'L' if pil.mode in ('L', '1', 'I', 'I;16', 'F') else 'RGB'
            arr = np.asarray(pil.convert(mode), dtype=np.float64) / 255.0
    except FileNotFoundError as e:
        raise DataError(f"Image not found: {path}") from e
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f"Cannot read image {path}: {e}") from e
    return Image(arr)


def image_size(path: Union[str, Path]) -> Tuple[int, int]:
    """Native (width, height) from the file header without decoding pixels."""
    try:
        with PILImage.open(path) as pil:
            return pil.size
    except FileNotFoundError as e:
        raise DataError(f"Image not found: {path}") from e
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f"Cannot read image {path}: {e}") from e


def save_image(img: Image, path: Union[str, Path]):
    """Write an image as 8-bit PNG or PPM (by suffix), rounding to nearest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    pil = PILImage.fromarray(data[:, :, 0] if img.channels == 1 else data)
    fmt = 'PPM' if path.suffix.lower() in ('.ppm', '.pnm') else 'PNG'
    if fmt == 'PPM' and img.channels == 1:
        pil = pil.convert('RGB')
    pil.save(path, format=fmt)


def _axis_taps(in_n: int, out_n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    scale = in_n / out_n
    src = np.clip((np.arange(out_n) + 0.5) * scale - 0.5, 0.0, in_n - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_n - 1)
    return lo, hi, src - lo


def resize_bilinear(img: Image, out_w: int, out_h: int) -> Image:
    """Bilinear resize with edge clamping (half-pixel centers, no corner alignment)."""
    if out_w < 1 or out_h < 1:
        raise ConfigurationError(f"Resize target must be at least 1x1, got {out_w}x{out_h}")
    if (out_w, out_h) == img.size:
        return Image(img.pixels.copy())
    x0, x1, fx = _axis_taps(img.width, out_w)
    y0, y1, fy = _axis_taps(img.height, out_h)
    p = img.pixels
    fx = fx[None, :, None]
    top = p[y0][:, x0] * (1 - fx) + p[y0][:, x1] * fx
    bottom = p[y1][:, x0] * (1 - fx) + p[y1][:, x1] * fx
    fy = fy[:, None, None]
    return Image.from_array(top * (1 - fy) + bottom * fy)


def normalize(img: Image, mean: Sequence[float], std: Sequence[float]) -> np.ndarray:
    """Channelwise (pixel - mean) / std; the result may leave [0, 1].

    Raises:
        ConfigurationError: if any std is not positive or the channel counts differ
    """
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    std = np.asarray(std, dtype=np.float64).reshape(-1)
    if mean.size != img.channels or std.size != img.channels:
        raise ConfigurationError(
            f"normalize needs {img.channels} mean/std values, got {mean.size}/{std.size}"
        )
    if np.any(std <= 0):
        raise ConfigurationError(f"normalize std must be positive, got {std.tolist()}")
    return (img.pixels - mean) / std


def channel_stats(images: Iterable[Image]) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std over a set of images (zero std replaced by 1)."""
    total, total_sq, count = None, None, 0
    for img in images:
        flat = img.pixels.reshape(-1, img.channels)
        total = flat.sum(axis=0) if total is None else total + flat.sum(axis=0)
        total_sq = (flat ** 2).sum(axis=0) if total_sq is None else total_sq + (flat ** 2).sum(axis=0)
        count += flat.shape[0]
    if not count:
        raise DataError("Cannot compute channel statistics of an empty image set")
    mean = total / count
    std = np.sqrt(np.maximum(total_sq / count - mean ** 2, 0.0))
    return mean, np.where(std > 1e-8, std, 1.0)
