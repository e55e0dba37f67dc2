"""
Retina Locator - Standard synthetic run, end to end
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Trains every model once with the default settings on the 80-image synthetic
set (64 train / 16 held out, seed 0) and checks the held-out results.
"""

import tempfile
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from retina_locator.data.dataset import load_dataset
from retina_locator.data.synthetic import write_synthetic_dataset
from retina_locator.detection.detector import detect
from retina_locator.evaluation.metrics import evaluate_records
from retina_locator.experiments import VARIANTS, VariantResult, relation_gap, variant_config
from retina_locator.geometry import iou
from retina_locator.imaging.transforms import crop
from retina_locator.models import LANDMARK_CLASSES, LandmarkClass
from retina_locator.pipeline import (
    LandmarkLocator,
    baseline_record,
    fit_baseline,
    fit_detector,
    fit_regressors,
    prepare_samples,
)
from retina_locator.regression.regressor import regress_center
from retina_locator.regression.training import detection_crop_box
from retina_locator.settings import RunConfig

pytestmark = pytest.mark.slow

OD = LandmarkClass.OPTIC_DISC
VARIANT = {v.name: v for v in VARIANTS}


@pytest.fixture(scope='module')
def standard_run():
    """Models and held-out evaluations of one default-settings run."""
    config = RunConfig()
    with tempfile.TemporaryDirectory() as tmp:
        out = write_synthetic_dataset(Path(tmp) / 'synth', config.synth, 80, config.geometry)
        train = load_dataset(out / 'images', combined_csv=out / 'train.csv')
        test = load_dataset(out / 'images', combined_csv=out / 'test.csv')
        train_samples = prepare_samples(train, config)
        test_samples = prepare_samples(test, config)

        detector, history = fit_detector(config, train_samples)
        regressors = fit_regressors(config, train_samples)
        baseline = fit_baseline(config, train_samples)
        ablated_config = variant_config(config, VARIANT['no-relation'])
        ablated, _ = fit_detector(ablated_config, train_samples)

        two_stage = evaluate_records(LandmarkLocator(config, detector, regressors).predict(test),
                                     config.evaluation, config.geometry)
        direct = evaluate_records([baseline_record(baseline, r, config) for r in test],
                                  config.evaluation, config.geometry)
        no_relation = evaluate_records(LandmarkLocator(ablated_config, ablated, regressors).predict(test),
                                       config.evaluation, config.geometry)
        yield SimpleNamespace(config=config, train=train, test=test, test_samples=test_samples,
                              detector=detector, history=history, regressors=regressors,
                              two_stage=two_stage, direct=direct, no_relation=no_relation)


def _hit_rate(hits):
    return sum(hits) / len(hits)


class TestDetector:
    def test_split(self, standard_run):
        assert (len(standard_run.train), len(standard_run.test)) == (64, 16)

    def test_loss_decreases(self, standard_run):
        history = standard_run.history
        assert len(history) == standard_run.config.detector.epochs
        assert history[-1]['loss'] < history[0]['loss']

    def test_argmax_optic_disc_detection(self, standard_run):
        hits = []
        for sample in standard_run.test_samples:
            best = standard_run.detector.forward(sample.image.to_chw()).raw_best()
            hits.append(iou(best[OD].box, sample.annotation.box(OD)) >= 0.5)
        assert _hit_rate(hits) >= 0.9

    def test_top_survivor_per_class(self, standard_run):
        hits = {label: [] for label in LANDMARK_CLASSES}
        for sample in standard_run.test_samples:
            final, _ = detect(standard_run.detector, sample.image.to_chw())
            for label in LANDMARK_CLASSES:
                hits[label].append(iou(final[label].box, sample.annotation.box(label)) >= 0.5)
        for label in LANDMARK_CLASSES:
            assert _hit_rate(hits[label]) >= 0.9, label.value


class TestRegressors:
    def test_error_on_ground_truth_crops(self, standard_run):
        """Mean error at the 128 px working resolution, crops taken around the true boxes."""
        config = standard_run.config
        for label in LANDMARK_CLASSES:
            errors = []
            for sample in standard_run.test_samples:
                box = detection_crop_box(sample.annotation.box(label), config.regressor.crop_context)
                region = crop(sample.image, box, config.imaging.crop_size)
                point = regress_center(standard_run.regressors[label], region.image, region.affine, label)
                truth = sample.annotation.point(label)
                errors.append(np.hypot(point.x - truth.x, point.y - truth.y))
            assert np.mean(errors) <= 3.0, label.value


class TestHeldOutMetrics:
    def test_two_stage_accuracy(self, standard_run):
        report = standard_run.two_stage
        assert report.num_images == 16
        assert report.map_50 >= 0.9
        limit = 0.03 * standard_run.config.synth.width
        for label in LANDMARK_CLASSES:
            assert report.mean_distance[label.value] <= limit, label.value

    def test_two_stage_beats_direct_regression(self, standard_run):
        for label in LANDMARK_CLASSES:
            assert standard_run.two_stage.mean_distance[label.value] < standard_run.direct.mean_distance[label.value]

    def test_relation_ablation_does_not_score_higher(self, standard_run):
        gap = relation_gap([VariantResult(VARIANT['two-stage'], standard_run.two_stage),
                            VariantResult(VARIANT['no-relation'], standard_run.no_relation)])
        assert gap >= 0.0


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
