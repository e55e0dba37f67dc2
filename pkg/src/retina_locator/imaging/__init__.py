"""
Retina Locator - Imaging
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from .clahe import clahe
from .image import Image, channel_stats, image_size, load_image, normalize, resize_bilinear, save_image
from .transforms import AffineTransform, Crop, crop, random_augment, transform_annotation, warp

__all__ = [
    'Image', 'load_image', 'save_image', 'image_size', 'resize_bilinear', 'normalize', 'channel_stats',
    'clahe', 'AffineTransform', 'Crop', 'crop', 'random_augment', 'transform_annotation', 'warp',
]
