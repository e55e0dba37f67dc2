"""
Retina Locator - Two-stage pipeline
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff.tensor import default_dtype
from .data.checkpoint import load_modules, read_checkpoint, save_modules
from .detection.detector import DetectorModel, detect
from .detection.training import DetectionSample, train_detector
from .exceptions import DataError
from .geometry import center_to_box, rescale_annotation, rescale_box, rescale_point, with_boxes
from .imaging.clahe import clahe
from .imaging.image import Image, channel_stats, load_image, resize_bilinear
from .imaging.transforms import crop
from .models import DatasetRecord, Detection, EvalRecord, LANDMARK_CLASSES, LandmarkClass, LandmarkPoint
from .regression.regressor import CropRegressorModel, DirectRegressorModel, predict_direct, regress_center
from .regression.training import CropSampler, detection_crop_box, train_direct_baseline, train_regressor
from .settings import ImagingConfig, RunConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Independent random streams per stage, all derived from config.seed
DETECTOR_INIT, DETECTOR_TRAIN, REGRESSOR_INIT, REGRESSOR_TRAIN, BASELINE_INIT, BASELINE_TRAIN = range(6)


def stage_rng(config: RunConfig, stage: int, extra: int = 0) -> np.random.Generator:
    return np.random.default_rng([config.seed, stage, extra])


def model_dtype(config: RunConfig):
    return np.float32 if config.precision == 'float32' else np.float64


def preprocess_image(img: Image, imaging: ImagingConfig) -> Image:
    """Resize to the square working size, then CLAHE; identical for training and inference."""
    size = imaging.working_size
    resized = resize_bilinear(img.to_rgb(), size, size)
    return clahe(resized, imaging.clahe_tiles_x, imaging.clahe_tiles_y, imaging.clahe_clip_limit, imaging.clahe_bins)


def prepare_sample(record: DatasetRecord, config: RunConfig) -> DetectionSample:
    """Load, preprocess and express the annotation at working resolution with boxes."""
    size = config.imaging.working_size
    image = preprocess_image(load_image(record.image_path), config.imaging)
    annotation = with_boxes(rescale_annotation(record.annotation, size, size), config.geometry)
    return DetectionSample(image=image, annotation=annotation)


def prepare_samples(records: Sequence[DatasetRecord], config: RunConfig) -> List[DetectionSample]:
    samples = [prepare_sample(r, config) for r in records]
    logger.info(f"Preprocessed {len(samples)} images to {config.imaging.working_size}px")
    return samples


def normalization_stats(samples: Sequence[DetectionSample]) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std of preprocessed training images."""
    return channel_stats(s.image for s in samples)


def build_detector(config: RunConfig) -> DetectorModel:
    with default_dtype(model_dtype(config)):
        return DetectorModel(config, stage_rng(config, DETECTOR_INIT))


def build_regressors(config: RunConfig) -> Dict[LandmarkClass, CropRegressorModel]:
    with default_dtype(model_dtype(config)):
        return {label: CropRegressorModel(config.regressor, config.imaging.crop_size,
                                          stage_rng(config, REGRESSOR_INIT, label.class_id))
                for label in LANDMARK_CLASSES}


def build_baseline(config: RunConfig) -> DirectRegressorModel:
    with default_dtype(model_dtype(config)):
        return DirectRegressorModel(config.baseline, config.imaging.working_size, stage_rng(config, BASELINE_INIT))


def regressor_sections(regressors: Dict[LandmarkClass, CropRegressorModel]) -> Dict[str, CropRegressorModel]:
    return {f'regressor.{label.short_name}.': model for label, model in regressors.items()}


def fit_detector(config: RunConfig, train: Sequence[DetectionSample],
                 val: Optional[Sequence[DetectionSample]] = None,
                 log_path: Optional[PathLike] = None) -> Tuple[DetectorModel, List[dict]]:
    model = build_detector(config)
    model.normalizer.set(*normalization_stats(train))
    with default_dtype(model_dtype(config)):
        history = train_detector(model, train, config, stage_rng(config, DETECTOR_TRAIN), val, log_path)
    return model, history


def fit_regressors(config: RunConfig, train: Sequence[DetectionSample],
                   log_dir: Optional[PathLike] = None) -> Dict[LandmarkClass, CropRegressorModel]:
    """Train one crop regressor per class on jittered ground-truth crops."""
    regressors = build_regressors(config)
    mean, std = normalization_stats(train)
    pairs = [(s.image, s.annotation) for s in train]
    with default_dtype(model_dtype(config)):
        for label, model in regressors.items():
            model.normalizer.set(mean, std)
            log_path = Path(log_dir) / f'regressor_{label.short_name}.jsonl' if log_dir else None
            logger.info(f"Training {label.value} regressor")
            train_regressor(model, CropSampler(pairs, label, config), config,
                            stage_rng(config, REGRESSOR_TRAIN, label.class_id), log_path)
    return regressors


def fit_baseline(config: RunConfig, train: Sequence[DetectionSample],
                 log_path: Optional[PathLike] = None) -> DirectRegressorModel:
    model = build_baseline(config)
    model.normalizer.set(*normalization_stats(train))
    with default_dtype(model_dtype(config)):
        train_direct_baseline(model, [(s.image, s.annotation) for s in train], config,
                              stage_rng(config, BASELINE_TRAIN), log_path)
    return model


def load_detector(path: PathLike, config: RunConfig) -> DetectorModel:
    """Rebuild a detector from its checkpoint.

    A checkpoint without relation weights was trained with the relation
    block ablated; one without duplicate-removal weights falls back to the
    configured classical path or an open gate.

    Raises:
        DataError: missing file or entries
        FormatError: malformed file
    """
    arrays = read_checkpoint(path)
    has_relation = any(name.startswith('relation.head') for name in arrays)
    has_dr = any(name.startswith('relation.dr.') for name in arrays)
    if config.relation.enabled and not has_relation:
        logger.info(f"{path} has no relation weights, loading with the relation block disabled")
        config = config.model_copy(update={'relation': config.relation.model_copy(update={'enabled': False})})
    if config.detector.duplicate_removal == 'learned' and has_relation and not has_dr:
        logger.info(f"{path} has no duplicate-removal weights, using classical NMS")
        config = config.model_copy(update={'detector': config.detector.model_copy(
            update={'duplicate_removal': 'nms'})})
    model = build_detector(config)
    for prefix, module in model.checkpoint_sections().items():
        module.load_state_dict(arrays, prefix)
    model.eval()
    return model


def load_regressors(path: PathLike, config: RunConfig) -> Dict[LandmarkClass, CropRegressorModel]:
    regressors = build_regressors(config)
    load_modules(regressor_sections(regressors), path)
    for model in regressors.values():
        model.eval()
    return regressors


def load_baseline(path: PathLike, config: RunConfig) -> DirectRegressorModel:
    model = build_baseline(config)
    load_modules({'baseline.direct.': model}, path)
    model.eval()
    return model


def save_detector(model: DetectorModel, path: PathLike) -> Path:
    return save_modules(model.checkpoint_sections(), path)


def save_regressors(regressors: Dict[LandmarkClass, CropRegressorModel], path: PathLike) -> Path:
    return save_modules(regressor_sections(regressors), path)


def save_baseline(model: DirectRegressorModel, path: PathLike) -> Path:
    return save_modules({'baseline.direct.': model}, path)


@dataclass
class Localization:
    """Stage outputs for one preprocessed image, in working coordinates."""

    detections: Dict[LandmarkClass, Detection]
    points: Dict[LandmarkClass, LandmarkPoint]
    candidates: List[Detection] = field(default_factory=list)

    @property
    def fallback(self) -> Dict[LandmarkClass, bool]:
        return {label: det.fallback for label, det in self.detections.items()}


class LandmarkLocator:
    """Detector followed by per-class crop regressors.

    Without regressors the detected box centers are returned.
    """

    def __init__(self, config: RunConfig, detector: DetectorModel,
                 regressors: Optional[Dict[LandmarkClass, CropRegressorModel]] = None):
        self.config = config
        self.detector = detector.eval()
        self.regressors = regressors or {}
        if not self.regressors:
            logger.warning("No regressors loaded, landmark centers come from the detected boxes")

    @classmethod
    def from_checkpoints(cls, config: RunConfig, detector_path: PathLike,
                         regressor_path: Optional[PathLike] = None) -> 'LandmarkLocator':
        if not Path(detector_path).is_file():
            raise DataError(f"Detector checkpoint not found: {detector_path}")
        detector = load_detector(detector_path, config)
        regressors = load_regressors(regressor_path, config) if regressor_path else None
        return cls(config, detector, regressors)

    def locate(self, image: Image) -> Localization:
        """Run both stages on a preprocessed working-resolution image."""
        final, kept = detect(self.detector, image.to_chw())
        points = {}
        for label, det in final.items():
            model = self.regressors.get(label)
            if model is None:
                cx, cy = det.box.center
                points[label] = LandmarkPoint(x=cx, y=cy, label=label)
                continue
            region = crop(image, detection_crop_box(det.box, self.config.regressor.crop_context),
                          self.config.imaging.crop_size)
            points[label] = regress_center(model, region.image, region.affine, label)
        return Localization(detections=final, points=points, candidates=kept)

    def predict_record(self, record: DatasetRecord) -> Tuple[EvalRecord, Image]:
        """Locate both landmarks of a dataset image; returns the record and the native image."""
        native = load_image(record.image_path)
        size = self.config.imaging.working_size
        result = self.locate(preprocess_image(native, self.config.imaging))
        native_points = {label: rescale_point(p, (size, size), (record.native_width, record.native_height))
                         for label, p in result.points.items()}
        eval_record = EvalRecord(
            image_id=record.image_id, annotation=record.annotation, working_width=size, working_height=size,
            detections=[result.detections[label] for label in LANDMARK_CLASSES],
            predicted_points=result.points, native_points=native_points, fallback=result.fallback,
        )
        return eval_record, native

    def predict(self, records: Sequence[DatasetRecord]) -> List[EvalRecord]:
        return [self.predict_record(r)[0] for r in records]


def baseline_record(model: DirectRegressorModel, record: DatasetRecord, config: RunConfig) -> EvalRecord:
    """EvalRecord of the whole-image baseline; its detections are score-1 prior boxes."""
    size = config.imaging.working_size
    points = predict_direct(model, preprocess_image(load_image(record.image_path), config.imaging))
    detections = []
    for label, p in points.items():
        inside = LandmarkPoint(x=min(max(p.x, 0.0), size), y=min(max(p.y, 0.0), size), label=label)
        detections.append(Detection(label=label, score=1.0, box=center_to_box(inside, size, config.geometry)))
    native_points = {label: rescale_point(p, (size, size), (record.native_width, record.native_height))
                     for label, p in points.items()}
    return EvalRecord(image_id=record.image_id, annotation=record.annotation, working_width=size,
                      working_height=size, detections=detections, predicted_points=points,
                      native_points=native_points, fallback={label: False for label in LANDMARK_CLASSES})


def native_detection_boxes(record: EvalRecord) -> Dict[LandmarkClass, Detection]:
    """Record detections rescaled to the native frame, for overlays."""
    size = (record.working_width, record.working_height)
    native = (record.annotation.width, record.annotation.height)
    return {d.label: d.model_copy(update={'box': rescale_box(d.box, size, native)}) for d in record.detections}
