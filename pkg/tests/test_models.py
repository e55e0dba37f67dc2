"""
Retina Locator - Basic tests
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import pytest
from pydantic import ValidationError

from retina_locator.exceptions import (
    BatchSizeError,
    ConfigurationError,
    DataError,
    DimensionError,
    FormatError,
    ParseError,
    RetinaLocatorError,
)
from retina_locator.models import (
    Annotation,
    BBox,
    DatasetRecord,
    Detection,
    EvalRecord,
    LANDMARK_CLASSES,
    LandmarkClass,
    LandmarkPoint,
    MetricReport,
)

OD, FOVEA = LandmarkClass.OPTIC_DISC, LandmarkClass.FOVEA


def test_detection_creation():
    """Test creating a detection."""
    box = BBox(x_min=1.0, y_min=2.0, x_max=11.0, y_max=8.0)
    detection = Detection(label=OD, score=0.8, box=box)

    assert detection.label == OD
    assert detection.box.center == (6.0, 5.0)
    assert detection.box.area == 60.0
    assert not detection.fallback


def test_detection_score_range():
    """Scores outside [0, 1] are rejected."""
    box = BBox(x_min=0.0, y_min=0.0, x_max=1.0, y_max=1.0)
    with pytest.raises(ValidationError):
        Detection(label=FOVEA, score=1.5, box=box)


def test_dataset_record():
    """Test a record with a missing landmark."""
    ann = Annotation(image_id='IDRiD_07', width=4288, height=2848,
                     optic_disc=LandmarkPoint(x=2500.0, y=1400.0, label=OD))
    record = DatasetRecord(image_path='images/IDRiD_07.jpg', native_width=4288, native_height=2848,
                           annotation=ann, missing=[FOVEA])

    assert record.image_id == 'IDRiD_07'
    assert ann.present_classes() == [OD]
    assert record.missing == [FOVEA]


def test_eval_record_defaults():
    """Test an evaluation record without predictions."""
    ann = Annotation(image_id='a', width=64, height=64)
    record = EvalRecord(image_id='a', annotation=ann, working_width=32, working_height=32)

    assert record.detections == []
    assert record.predicted_points == {}
    assert record.fallback == {}


def test_metric_report_bounds():
    """APs must lie in [0, 1]."""
    MetricReport(map_50_95=0.5, map_50=0.9, map_75=0.6)
    with pytest.raises(ValidationError):
        MetricReport(map_50_95=1.2, map_50=0.9, map_75=0.6)


def test_landmark_classes():
    assert LANDMARK_CLASSES == (OD, FOVEA)
    assert [c.value for c in LANDMARK_CLASSES] == ['optic_disc', 'fovea']
    assert OD.short_name == 'od'
    with pytest.raises(ValueError):
        LandmarkClass.from_class_id(0)


def test_point_is_immutable():
    point = LandmarkPoint(x=1.0, y=2.0, label=OD)
    with pytest.raises(ValidationError):
        point.x = 3.0


def test_error_hierarchy():
    """Every error the package raises shares one base class."""
    assert issubclass(BatchSizeError, DimensionError)
    assert issubclass(ParseError, DataError)
    assert issubclass(FormatError, DataError)
    for error in (ConfigurationError, DataError, DimensionError):
        assert issubclass(error, RetinaLocatorError)
        assert not issubclass(error, ValueError)


def test_error_locations():
    assert str(ParseError('bad value', 'centers.csv', 4)) == 'centers.csv:4: bad value'
    assert str(FormatError('truncated', 12)) == 'truncated (at byte offset 12)'


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
