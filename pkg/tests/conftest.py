"""
Retina Locator - Shared test fixtures
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from retina_locator.autodiff.tensor import default_dtype  # noqa: E402
from retina_locator.data.synthetic import generate_synthetic  # noqa: E402
from retina_locator.detection.training import DetectionSample  # noqa: E402
from retina_locator.geometry import rescale_annotation, with_boxes  # noqa: E402
from retina_locator.pipeline import preprocess_image  # noqa: E402
from retina_locator.settings import RunConfig  # noqa: E402

TINY_CONFIG = {
    'precision': 'float64',
    'imaging': {'working_size': 32, 'clahe_tiles_x': 4, 'clahe_tiles_y': 4, 'crop_size': 16},
    'relation': {'feature_dim': 8, 'num_heads': 2, 'key_dim': 4, 'geo_dim': 16, 'top_k': 4},
    'detector': {'backbone_channels': [4, 4, 8, 8], 'epochs': 2, 'batch_size': 2, 'dr_top_n': 4},
    'regressor': {'channels': [4, 8], 'steps': 4, 'batch_size': 4, 'log_every': 2},
    'baseline': {'channels': [4, 4, 8, 8], 'steps': 4, 'batch_size': 2, 'log_every': 2},
    'synth': {'width': 96, 'height': 64, 'disc_radius_min': 6.0, 'disc_radius_max': 8.0,
              'vessel_strokes': 2, 'test_fraction': 0.25},
}


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long synthetic training runs (deselect with -m "not slow")')


@pytest.fixture
def float64():
    """Run the test with float64 tensors."""
    with default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(params=range(20), ids=lambda seed: f"seed{seed}")
def grad_rng(request):
    """Generator for gradient checks; a test taking it runs once per seed."""
    return np.random.default_rng(request.param)


@pytest.fixture
def tiny_config():
    """Desk-scale run settings small enough for unit tests."""
    return RunConfig.model_validate(TINY_CONFIG)


@pytest.fixture
def make_samples():
    """Factory of preprocessed synthetic DetectionSamples at working resolution."""

    def _make(config, n):
        size = config.imaging.working_size
        samples = []
        for image, ann in generate_synthetic(config.synth, n, config.geometry):
            working = with_boxes(rescale_annotation(ann, size, size), config.geometry)
            samples.append(DetectionSample(image=preprocess_image(image, config.imaging), annotation=working))
        return samples

    return _make
