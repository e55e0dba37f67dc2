"""
Retina Locator - Contrast-limited adaptive histogram equalization
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging

import numpy as np

from ..exceptions import ConfigurationError
from .image import Image

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def tile_bounds(length: int, tiles: int) -> np.ndarray:
    """Tile i covers [bounds[i], bounds[i+1])."""
    return np.array([(i * length) // tiles for i in range(tiles + 1)], dtype=np.int64)


def tile_mapping(bin_index: np.ndarray, bins: int, clip_limit: float) -> np.ndarray:
    """Clipped-histogram CDF of one tile, indexed by bin.

    Counts above ``clip_limit * n`` are cut and the excess spread evenly over
    all bins. An empty tile maps each bin to its own center.
    """
    n = bin_index.size
    if n == 0:
        return (np.arange(bins) + 0.5) / bins
    hist = np.bincount(bin_index.reshape(-1), minlength=bins).astype(np.float64)
    limit = clip_limit * n
    excess = np.clip(hist - limit, 0.0, None).sum()
    hist = np.minimum(hist, limit) + excess / bins
    return np.cumsum(hist) / n


def _blend_positions(length: int, bounds: np.ndarray):
    centers = (bounds[:-1] + bounds[1:] - 1) / 2.0
    pos = np.interp(np.arange(length, dtype=np.float64), centers, np.arange(len(centers), dtype=np.float64))
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, len(centers) - 1)
    return lo, hi, pos - lo


def clahe_plane(plane: np.ndarray, tiles_x: int = 8, tiles_y: int = 8,
                clip_limit: float = 0.01, bins: int = 256) -> np.ndarray:
    """CLAHE on a single (h, w) intensity plane in [0, 1]."""
    h, w = plane.shape
    bin_index = np.minimum((np.clip(plane, 0.0, 1.0) * bins).astype(np.int64), bins - 1)
    ys, xs = tile_bounds(h, tiles_y), tile_bounds(w, tiles_x)

    maps = np.empty((tiles_y, tiles_x, bins))
    for i in range(tiles_y):
        for j in range(tiles_x):
            tile = bin_index[ys[i]:ys[i + 1], xs[j]:xs[j + 1]]
            maps[i, j] = tile_mapping(tile, bins, clip_limit)

    r0, r1, fy = _blend_positions(h, ys)
    c0, c1, fx = _blend_positions(w, xs)
    r0, r1, fy = r0[:, None], r1[:, None], fy[:, None]
    c0, c1, fx = c0[None, :], c1[None, :], fx[None, :]
    out = ((1 - fy) * (1 - fx) * maps[r0, c0, bin_index]
           + (1 - fy) * fx * maps[r0, c1, bin_index]
           + fy * (1 - fx) * maps[r1, c0, bin_index]
           + fy * fx * maps[r1, c1, bin_index])
    return np.clip(out, 0.0, 1.0)


def clahe(img: Image, tiles_x: int = 8, tiles_y: int = 8, clip_limit: float = 0.01, bins: int = 256) -> Image:
    """Contrast-limited adaptive histogram equalization.

    Grayscale images are equalized directly. RGB images are equalized on
    luma and every channel is scaled by the luma ratio, which keeps chroma.

    Raises:
        ConfigurationError: if the image is smaller than the tile grid
    """
    if img.width < tiles_x or img.height < tiles_y:
        raise ConfigurationError(
            f"Image {img.width}x{img.height} is smaller than the {tiles_x}x{tiles_y} CLAHE grid"
        )
    if not 0 < clip_limit <= 1 or bins < 2:
        raise ConfigurationError(f"Invalid CLAHE parameters: clip_limit={clip_limit}, bins={bins}")

    if img.channels == 1:
        return Image(clahe_plane(img.pixels[:, :, 0], tiles_x, tiles_y, clip_limit, bins))

    luma = img.pixels @ LUMA_WEIGHTS
    equalized = clahe_plane(luma, tiles_x, tiles_y, clip_limit, bins)
    dark = luma <= 1e-6
    ratio = np.where(dark, 0.0, equalized / np.where(dark, 1.0, luma))
    out = np.where(dark[:, :, None], equalized[:, :, None], img.pixels * ratio[:, :, None])
    return Image.from_array(out)
