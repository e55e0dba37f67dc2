"""
Retina Locator - Regressor training
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.nn import Module
from ..autodiff.optim import ParamStore, adam_step
from ..autodiff.tensor import Tape, backward
from ..exceptions import DataError
from ..geometry import class_half_size
from ..imaging.image import Image
from ..imaging.transforms import crop, random_augment
from ..models import Annotation, BBox, LANDMARK_CLASSES, LandmarkClass
from ..settings import RunConfig
from .regressor import CropRegressorModel, DirectRegressorModel

logger = logging.getLogger(__name__)

Sample = Tuple[Image, Annotation]


def context_box(center_x: float, center_y: float, half_w: float, half_h: float, context: float) -> BBox:
    """Box of half size ``context * (half_w, half_h)`` around a center."""
    return BBox(x_min=center_x - context * half_w, y_min=center_y - context * half_h,
                x_max=center_x + context * half_w, y_max=center_y + context * half_h)


def detection_crop_box(box: BBox, context: float) -> BBox:
    """Enlarge a detected box about its center for the regressor crop."""
    cx, cy = box.center
    return context_box(cx, cy, box.width / 2.0, box.height / 2.0, context)


class CropSource(ABC):
    """Supplies (crops, normalized targets) batches to :func:`train_regressor`."""

    skipped = 0

    @abstractmethod
    def next_batch(self, batch_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Return (B, 3, S, S) crops and (B, 2) targets in [0, 1]."""
        pass


class FixedCrops(CropSource):
    """A fixed set of crops, served whole or as random subsets."""

    def __init__(self, crops: np.ndarray, targets: np.ndarray):
        self.crops = np.asarray(crops, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
        if not len(self.crops) or len(self.crops) != len(self.targets):
            raise DataError(f"FixedCrops needs matching non-empty crops and targets, "
                            f"got {len(self.crops)} and {len(self.targets)}")

    def next_batch(self, batch_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        if len(self.crops) <= batch_size:
            return self.crops, self.targets
        idx = np.sort(rng.choice(len(self.crops), size=batch_size, replace=False))
        return self.crops[idx], self.targets[idx]


class CropSampler(CropSource):
    """Crops around jittered ground-truth boxes of one class.

    The crop box is the class prior box enlarged by ``regressor.crop_context``
    and shifted by up to ``regressor.jitter`` of the prior box size, so the
    regressor sees the off-center boxes the detector produces.
    """

    def __init__(self, samples: Sequence[Sample], label: LandmarkClass, config: RunConfig):
        self.samples = [(img, ann) for img, ann in samples if ann.point(label) is not None]
        if not self.samples:
            raise DataError(f"No training images carry a {label.value} annotation")
        self.label = label
        self.config = config
        self.skipped = 0

    def sample_box(self, image: Image, x: float, y: float, rng: np.random.Generator) -> BBox:
        reg = self.config.regressor
        half_w, half_h = class_half_size(self.label, image.size, self.config.geometry)
        dx = rng.uniform(-reg.jitter, reg.jitter) * 2 * half_w
        dy = rng.uniform(-reg.jitter, reg.jitter) * 2 * half_h
        return context_box(x + dx, y + dy, half_w, half_h, reg.crop_context)

    def next_batch(self, batch_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        crops, targets = [], []
        attempts = 0
        while len(crops) < batch_size and attempts < 10 * batch_size:
            attempts += 1
            image, ann = self.samples[int(rng.integers(len(self.samples)))]
            if self.config.augment.enabled:
                image, ann, _ = random_augment(image, ann, rng, self.config.augment)
            point = ann.point(self.label)
            region = crop(image, self.sample_box(image, point.x, point.y, rng), self.config.imaging.crop_size)
            u, v = region.from_image(point.x, point.y)
            if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
                self.skipped += 1
                continue
            crops.append(region.image.to_chw())
            targets.append((u, v))
        if len(crops) < 2:
            raise DataError(f"Could not draw a {self.label.value} crop batch ({self.skipped} targets outside crops)")
        return np.stack(crops), np.array(targets)


def _open_log(log_path: Optional[Union[str, Path]]) -> Optional[Path]:
    if not log_path:
        return None
    path = Path(log_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('')
    return path


def _fit(model: Module, batches, steps: int, lr: float, log_every: int, name: str,
         log_path: Optional[Union[str, Path]]) -> List[Dict[str, Any]]:
    store = ParamStore(model.named_parameters())
    log_file = _open_log(log_path)
    history = []
    model.train()
    for step in range(1, steps + 1):
        inputs, targets = batches()
        with Tape() as tape:
            loss = T.mse_loss(model(inputs), targets)
        backward(loss, tape)
        store.ensure_grads()
        adam_step(store, lr)
        store.zero_grad()
        if step % log_every == 0 or step == steps:
            entry = {'step': step, 'loss': loss.item()}
            history.append(entry)
            logger.info(f"{name} step {step}/{steps} loss={entry['loss']:.6f}")
            if log_file:
                with open(log_file, 'a') as f:
                    f.write(json.dumps(entry) + '\n')
    model.eval()
    return history


def train_regressor(model: CropRegressorModel, source: CropSource, config: RunConfig,
                    rng: Optional[np.random.Generator] = None,
                    log_path: Optional[Union[str, Path]] = None) -> List[Dict[str, Any]]:
    """Minimize the mean squared center error with Adam.

    Returns:
        Log entries (step, loss) every ``regressor.log_every`` steps
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    reg = config.regressor
    history = _fit(model, lambda: source.next_batch(reg.batch_size, rng), reg.steps, reg.lr, reg.log_every,
                   'regressor', log_path)
    if source.skipped:
        logger.warning(f"Skipped {source.skipped} crops whose target fell outside the crop")
    return history


def train_direct_baseline(model: DirectRegressorModel, samples: Sequence[Sample], config: RunConfig,
                          rng: Optional[np.random.Generator] = None,
                          log_path: Optional[Union[str, Path]] = None) -> List[Dict[str, Any]]:
    """Train the whole-image baseline on both centers with Adam and MSE.

    Images lacking either landmark are left out.

    Raises:
        DataError: if no image carries both landmarks
    """
    usable = [(img, ann) for img, ann in samples if all(ann.point(c) is not None for c in LANDMARK_CLASSES)]
    if len(usable) < len(samples):
        logger.warning(f"Baseline skips {len(samples) - len(usable)} images missing a landmark")
    if not usable:
        raise DataError("Cannot train the baseline on an empty dataset")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    base = config.baseline

    def batches():
        images, targets = [], []
        for i in rng.choice(len(usable), size=base.batch_size, replace=len(usable) < base.batch_size):
            image, ann = usable[int(i)]
            if config.augment.enabled:
                image, ann, _ = random_augment(image, ann, rng, config.augment)
            images.append(image.to_chw())
            targets.append([v for c in LANDMARK_CLASSES
                            for v in (ann.point(c).x / image.width, ann.point(c).y / image.height)])
        return np.stack(images), np.array(targets)

    return _fit(model, batches, base.steps, base.lr, base.log_every, 'baseline', log_path)
