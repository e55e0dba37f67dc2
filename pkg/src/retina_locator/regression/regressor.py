"""
Retina Locator - Center regressors
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from typing import Dict, List, Optional

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.nn import BatchNorm, Conv2d, Linear, Module, Normalizer
from ..autodiff.tensor import Tensor
from ..exceptions import ConfigurationError, ContractError
from ..imaging.image import Image
from ..imaging.transforms import AffineTransform
from ..models import LANDMARK_CLASSES, LandmarkClass, LandmarkPoint
from ..settings import BaselineConfig, RegressorConfig

logger = logging.getLogger(__name__)


def _conv_out(size: int) -> int:
    return (size - 1) // 2 + 1


class CropRegressorModel(Module):
    """Two conv + batch-norm + relu layers and a sigmoid head giving (u, v) in the crop.

    The default ``head_pool='gap'`` global-average-pools the last feature map
    into the head; ``'flatten'`` keeps its spatial layout instead.
    """

    def __init__(self, config: RegressorConfig, crop_size: int, rng: np.random.Generator):
        super().__init__()
        if len(config.channels) != 2:
            raise ConfigurationError(f"regressor.channels must list 2 widths, got {config.channels}")
        c1, c2 = config.channels
        self.crop_size = crop_size
        self.head_pool = config.head_pool
        self.normalizer = self.add_child('norm', Normalizer(3))
        self.conv1 = self.add_child('conv1', Conv2d(3, c1, 3, rng, stride=2, pad=1, bias=False))
        self.bn1 = self.add_child('bn1', BatchNorm(c1))
        self.conv2 = self.add_child('conv2', Conv2d(c1, c2, 3, rng, stride=2, pad=1, bias=False))
        self.bn2 = self.add_child('bn2', BatchNorm(c2))
        side = _conv_out(_conv_out(crop_size))
        head_in = c2 if self.head_pool == 'gap' else c2 * side * side
        self.head = self.add_child('head', Linear(head_in, 2, rng))

    def forward(self, crops: np.ndarray) -> Tensor:
        """(B, 3, S, S) crops in [0, 1] -> (B, 2) normalized centers."""
        crops = np.asarray(crops)
        if crops.ndim != 4 or crops.shape[1:] != (3, self.crop_size, self.crop_size):
            raise ConfigurationError(f"Regressor expects (B, 3, {self.crop_size}, {self.crop_size}) crops, "
                                     f"got {crops.shape}")
        x = Tensor(self.normalizer(crops), dtype=self.head.weight.dtype)
        x = T.relu(self.bn1(self.conv1(x)))
        x = T.relu(self.bn2(self.conv2(x)))
        if self.head_pool == 'gap':
            x = T.global_avg_pool(x)
        else:
            x = T.reshape(x, (x.shape[0], -1))
        return T.sigmoid(self.head(x))


class DirectRegressorModel(Module):
    """Strided conv stack over the whole working image, 4 sigmoid outputs.

    Outputs are (x_od / W, y_od / H, x_fovea / W, y_fovea / H).
    """

    def __init__(self, config: BaselineConfig, working_size: int, rng: np.random.Generator):
        super().__init__()
        self.working_size = working_size
        self.normalizer = self.add_child('norm', Normalizer(3))
        self.convs: List[Conv2d] = []
        prev, side = 3, working_size
        for i, c in enumerate(config.channels):
            self.convs.append(self.add_child(f'conv{i + 1}', Conv2d(prev, c, 3, rng, stride=2, pad=1)))
            prev, side = c, _conv_out(side)
        self.head = self.add_child('head', Linear(prev * side * side, 4, rng))

    def forward(self, images: np.ndarray) -> Tensor:
        images = np.asarray(images)
        if images.ndim != 4 or images.shape[1:] != (3, self.working_size, self.working_size):
            raise ConfigurationError(f"Baseline expects (B, 3, {self.working_size}, {self.working_size}) images, "
                                     f"got {images.shape}")
        x = Tensor(self.normalizer(images), dtype=self.head.weight.dtype)
        for conv in self.convs:
            x = T.relu(conv(x))
        return T.sigmoid(self.head(T.reshape(x, (x.shape[0], -1))))


def regress_center(model: CropRegressorModel, crop_image: Image, crop_affine: Optional[AffineTransform],
                   label: LandmarkClass) -> LandmarkPoint:
    """Predict a landmark center in image coordinates from its crop.

    Raises:
        ContractError: if the crop-to-image transform is missing
    """
    if crop_affine is None:
        raise ContractError("regress_center needs the crop-to-image affine of the crop")
    model.eval()
    with T.no_tape():
        u, v = model(crop_image.to_chw()[None]).data[0]
    x, y = crop_affine.apply_point(float(u), float(v))
    return LandmarkPoint(x=x, y=y, label=label)


def predict_direct(model: DirectRegressorModel, image: Image) -> Dict[LandmarkClass, LandmarkPoint]:
    """Both landmark centers of a working-resolution image from the baseline."""
    model.eval()
    with T.no_tape():
        out = model(image.to_chw()[None]).data[0]
    points = {}
    for i, label in enumerate(LANDMARK_CLASSES):
        points[label] = LandmarkPoint(x=float(out[2 * i]) * image.width, y=float(out[2 * i + 1]) * image.height,
                                      label=label)
    return points
