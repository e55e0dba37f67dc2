"""
Retina Locator - Tests for the two-stage pipeline
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from retina_locator.data.checkpoint import read_checkpoint
from retina_locator.data.dataset import load_dataset
from retina_locator.data.synthetic import write_synthetic_dataset
from retina_locator.detection.detector import detect
from retina_locator.evaluation.metrics import evaluate_records
from retina_locator.exceptions import DataError
from retina_locator.imaging.image import Image
from retina_locator.models import LANDMARK_CLASSES, LandmarkClass
from retina_locator.pipeline import (
    LandmarkLocator,
    baseline_record,
    build_detector,
    build_regressors,
    fit_baseline,
    fit_detector,
    fit_regressors,
    load_baseline,
    load_detector,
    load_regressors,
    native_detection_boxes,
    prepare_samples,
    preprocess_image,
    save_baseline,
    save_detector,
    save_regressors,
    stage_rng,
)

OD, FOVEA = LandmarkClass.OPTIC_DISC, LandmarkClass.FOVEA


@pytest.fixture
def config32(tiny_config):
    """Tiny settings at float32, the checkpoint precision."""
    return tiny_config.model_copy(update={'precision': 'float32'})


@pytest.fixture
def dataset(config32):
    """Four synthetic images on disk: (records, working directory)."""
    with tempfile.TemporaryDirectory() as tmp:
        out = write_synthetic_dataset(Path(tmp) / 'synth', config32.synth, 4, config32.geometry)
        yield load_dataset(out / 'images', combined_csv=out / 'annotations.csv'), Path(tmp)


class TestPreprocessing:
    def test_working_size_rgb(self, config32, rng):
        out = preprocess_image(Image(rng.uniform(size=(64, 96))), config32.imaging)
        assert out.size == (32, 32) and out.channels == 3

    def test_samples_at_working_resolution(self, config32, dataset):
        records, _ = dataset
        samples = prepare_samples(records, config32)
        for record, sample in zip(records, samples):
            assert sample.image.size == (32, 32)
            assert sample.annotation.width == 32
            assert sample.annotation.optic_disc.x == pytest.approx(record.annotation.optic_disc.x * 32 / 96)
            assert sample.annotation.optic_disc_box is not None


class TestCheckpoints:
    """Save and reload of every model family."""

    def test_detector_round_trip(self, config32, dataset):
        records, tmp = dataset
        samples = prepare_samples(records, config32)
        model, history = fit_detector(config32, samples)
        assert len(history) == config32.detector.epochs
        path = save_detector(model, tmp / 'ckpt' / 'detector.frl')
        names = set(read_checkpoint(path))
        assert 'detector.norm.input_mean' in names
        assert 'relation.head0.WG' in names
        assert any(name.startswith('relation.dr.') for name in names)

        reloaded = load_detector(path, config32)
        image = samples[0].image.to_chw()
        assert detect(model.eval(), image) == detect(reloaded, image)

    def test_ablated_checkpoint_loads_without_relation(self, config32, dataset):
        records, tmp = dataset
        ablated = config32.model_copy(update={'relation': config32.relation.model_copy(update={'enabled': False})})
        model, _ = fit_detector(ablated, prepare_samples(records[:2], ablated))
        path = save_detector(model, tmp / 'ablated.frl')
        reloaded = load_detector(path, config32)
        assert reloaded.relation is None and reloaded.dr_head is None

    def test_regressors_and_baseline_round_trip(self, config32, dataset):
        records, tmp = dataset
        samples = prepare_samples(records, config32)
        regressors = fit_regressors(config32, samples, tmp / 'logs')
        assert (tmp / 'logs' / 'regressor_od.jsonl').is_file()
        save_regressors(regressors, tmp / 'regressors.frl')
        reloaded = load_regressors(tmp / 'regressors.frl', config32)
        for label in LANDMARK_CLASSES:
            for name, value in regressors[label].state_dict().items():
                np.testing.assert_array_equal(reloaded[label].state_dict()[name], value)

        baseline = fit_baseline(config32, samples)
        save_baseline(baseline, tmp / 'baseline.frl')
        assert set(load_baseline(tmp / 'baseline.frl', config32).state_dict()) == set(baseline.state_dict())

    def test_missing_detector_checkpoint(self, config32, dataset):
        _, tmp = dataset
        with pytest.raises(DataError):
            LandmarkLocator.from_checkpoints(config32, tmp / 'nothing.frl')


class TestLocator:
    def test_without_regressors_uses_box_centers(self, config32, dataset):
        records, _ = dataset
        locator = LandmarkLocator(config32, build_detector(config32))
        sample = prepare_samples(records[:1], config32)[0]
        result = locator.locate(sample.image)
        for label in LANDMARK_CLASSES:
            assert (result.points[label].x, result.points[label].y) == result.detections[label].box.center

    def test_regressed_points_stay_inside_crop(self, config32, dataset):
        records, _ = dataset
        locator = LandmarkLocator(config32, build_detector(config32), build_regressors(config32))
        result = locator.locate(prepare_samples(records[:1], config32)[0].image)
        context = config32.regressor.crop_context
        for label in LANDMARK_CLASSES:
            box = result.detections[label].box
            cx, cy = box.center
            assert abs(result.points[label].x - cx) <= context * box.width / 2 + 1e-6
            assert abs(result.points[label].y - cy) <= context * box.height / 2 + 1e-6

    def test_predict_record(self, config32, dataset):
        records, _ = dataset
        locator = LandmarkLocator(config32, build_detector(config32), build_regressors(config32))
        eval_record, native = locator.predict_record(records[0])
        assert native.size == (96, 64)
        assert [d.label for d in eval_record.detections] == [OD, FOVEA]
        for label in LANDMARK_CLASSES:
            working = eval_record.predicted_points[label]
            assert eval_record.native_points[label].x == pytest.approx(working.x * 96 / 32)
            assert eval_record.native_points[label].y == pytest.approx(working.y * 64 / 32)
        boxes = native_detection_boxes(eval_record)
        assert boxes[OD].box.x_max <= 96 and boxes[OD].box.y_max <= 64

        report = evaluate_records(locator.predict(records))
        assert report.num_images == 4
        assert 0.0 <= report.map_75 <= report.map_50 <= 1.0

    def test_baseline_record(self, config32, dataset):
        records, _ = dataset
        model = fit_baseline(config32, prepare_samples(records, config32))
        record = baseline_record(model, records[0], config32)
        assert set(record.native_points) == {OD, FOVEA}
        assert all(d.score == 1.0 for d in record.detections)
        assert record.fallback == {OD: False, FOVEA: False}


class TestDeterminism:
    def test_stage_streams_differ(self, config32):
        a = stage_rng(config32, 0).uniform(size=4)
        b = stage_rng(config32, 1).uniform(size=4)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, stage_rng(config32, 0).uniform(size=4))

    def test_same_seed_same_detector(self, config32, dataset):
        records, _ = dataset
        samples = prepare_samples(records, config32)
        first, _ = fit_detector(config32, samples)
        second, _ = fit_detector(config32, samples)
        for prefix, module in first.checkpoint_sections().items():
            other = second.checkpoint_sections()[prefix]
            for name, value in module.state_dict().items():
                np.testing.assert_array_equal(other.state_dict()[name], value)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
