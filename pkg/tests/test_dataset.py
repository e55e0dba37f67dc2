"""
Retina Locator - Tests for CSV ingestion, prediction files and run manifests
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import tempfile
from pathlib import Path

import pytest
import yaml
from PIL import Image as PILImage

from retina_locator.data.dataset import (
    build_annotation,
    load_dataset,
    read_predictions_csv,
    read_unified_csv,
    write_predictions_csv,
    write_unified_csv,
)
from retina_locator.data.manifest import read_manifest, write_manifest
from retina_locator.exceptions import DataError, GeometryError, ParseError
from retina_locator.models import Detection, EvalRecord, LandmarkClass, LandmarkPoint
from retina_locator.settings import RunConfig

OD, FOVEA = LandmarkClass.OPTIC_DISC, LandmarkClass.FOVEA

HEADER = 'image,od_x,od_y,fov_x,fov_y\n'


@pytest.fixture
def workdir():
    with tempfile.TemporaryDirectory() as tmp:
        yield Path(tmp)


def _blank_png(path, width, height):
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.new('RGB', (width, height)).save(path)


def _write(path, text):
    path.write_text(text, encoding='utf-8')
    return path


class TestUnifiedCsv:
    """Canonical ``image,od_x,od_y,fov_x,fov_y`` files."""

    def test_parse_row(self, workdir):
        _blank_png(workdir / 'images' / 'IDRiD_01.png', 4288, 2848)
        csv_path = _write(workdir / 'centers.csv', HEADER + 'IDRiD_01,2500.0,1400.0,2100.0,1500.0\n')
        [record] = load_dataset(workdir / 'images', combined_csv=csv_path)
        assert (record.native_width, record.native_height) == (4288, 2848)
        assert (record.annotation.optic_disc.x, record.annotation.optic_disc.y) == (2500.0, 1400.0)
        assert (record.annotation.fovea.x, record.annotation.fovea.y) == (2100.0, 1500.0)
        assert record.annotation.optic_disc_box.contains(2500.0, 1400.0)
        assert record.missing == []

    def test_center_outside_image_is_rejected(self, workdir):
        _blank_png(workdir / 'a.png', 100, 80)
        _blank_png(workdir / 'b.png', 100, 80)
        csv_path = _write(workdir / 'c.csv', HEADER + 'a,10,10,50,40\nb,150,10,50,40\n')
        records = load_dataset(workdir, combined_csv=csv_path)
        assert [r.image_id for r in records] == ['a']

    def test_missing_image_is_skipped(self, workdir):
        _blank_png(workdir / 'a.png', 100, 80)
        csv_path = _write(workdir / 'c.csv', HEADER + 'ghost,10,10,50,40\na,10,10,50,40\n')
        assert [r.image_id for r in load_dataset(workdir, combined_csv=csv_path)] == ['a']

    def test_nothing_usable(self, workdir):
        csv_path = _write(workdir / 'c.csv', HEADER + 'ghost,10,10,50,40\n')
        with pytest.raises(DataError):
            load_dataset(workdir, combined_csv=csv_path)

    def test_malformed_row_reports_line(self, workdir):
        csv_path = _write(workdir / 'c.csv', HEADER + 'a,1,2,3,4\nb,1,oops,3,4\n')
        with pytest.raises(ParseError) as info:
            read_unified_csv(csv_path)
        assert info.value.line == 3
        assert 'od_y' in str(info.value)

    def test_half_given_pair(self, workdir):
        csv_path = _write(workdir / 'c.csv', HEADER + 'a,1,,3,4\n')
        with pytest.raises(ParseError):
            read_unified_csv(csv_path)

    def test_wrong_header(self, workdir):
        with pytest.raises(ParseError):
            read_unified_csv(_write(workdir / 'c.csv', 'name,x,y\na,1,2\n'))

    def test_missing_class(self, workdir):
        _blank_png(workdir / 'a.png', 100, 80)
        csv_path = _write(workdir / 'c.csv', HEADER + 'a,10,10,,\n')
        [record] = load_dataset(workdir, combined_csv=csv_path)
        assert record.missing == [FOVEA]
        assert record.annotation.fovea is None

    def test_round_trip_keeps_three_decimals(self, workdir):
        ann = build_annotation('r', {OD: (12.3456, 7.0), FOVEA: (40.125, 33.5)}, 64, 48)
        path = write_unified_csv(workdir / 'out' / 'r.csv', [ann])
        assert path.read_text().splitlines()[1] == 'r,12.346,7.000,40.125,33.500'
        [row] = read_unified_csv(path)
        assert row.points == {OD: (12.346, 7.0), FOVEA: (40.125, 33.5)}

    def test_build_annotation_bounds(self):
        with pytest.raises(GeometryError):
            build_annotation('x', {OD: (65.0, 1.0)}, 64, 48)

    def test_requires_a_csv(self, workdir):
        with pytest.raises(DataError):
            load_dataset(workdir)


class TestIdridCsv:
    """Two-file layout with release-specific headers."""

    def test_join(self, workdir):
        for name in ('IDRiD_01', 'IDRiD_02'):
            _blank_png(workdir / 'img' / f'{name}.jpg', 300, 200)
        od = _write(workdir / 'od.csv', 'Image No,X- Coordinate,Y - Coordinate\nIDRiD_01,120,80\nIDRiD_02,100,90\n')
        fovea = _write(workdir / 'fovea.csv', 'Image No,X- Coordinate,Y - Coordinate,,\nIDRiD_01,200,100,,\n')
        records = load_dataset(workdir / 'img', od_csv=od, fovea_csv=fovea)
        assert [r.image_id for r in records] == ['IDRiD_01', 'IDRiD_02']
        assert records[0].annotation.fovea.x == 200.0
        assert records[1].missing == [FOVEA]

    def test_columns_in_other_order(self, workdir):
        _blank_png(workdir / 'e1.png', 300, 200)
        od = _write(workdir / 'od.csv', 'Y,X,Image name\n80,120,e1\n')
        fovea = _write(workdir / 'fovea.csv', 'Y,X,Image name\n100,200,e1\n')
        [record] = load_dataset(workdir, od_csv=od, fovea_csv=fovea)
        assert (record.annotation.optic_disc.x, record.annotation.optic_disc.y) == (120.0, 80.0)


class TestPredictionsCsv:
    def _record(self, ann):
        box = build_annotation('p', {OD: (10.0, 12.0)}, 64, 64).optic_disc_box
        return EvalRecord(
            image_id=ann.image_id, annotation=ann, working_width=32, working_height=32,
            detections=[Detection(label=OD, score=0.75, box=box),
                        Detection(label=FOVEA, score=0.0, box=box, fallback=True)],
            predicted_points={OD: LandmarkPoint(x=10.0, y=12.0, label=OD),
                              FOVEA: LandmarkPoint(x=20.5, y=16.0, label=FOVEA)},
            fallback={OD: False, FOVEA: True},
        )

    def test_round_trip(self, workdir):
        ann = build_annotation('p', {OD: (20.0, 30.0), FOVEA: (40.0, 30.0)}, 64, 64)
        path = write_predictions_csv(workdir / 'pred.csv', [self._record(ann)])
        [record] = read_predictions_csv(path, {'p': ann}, working_size=128)
        assert (record.working_width, record.working_height) == (32, 32)
        assert (record.native_points[OD].x, record.native_points[OD].y) == (20.0, 24.0)
        assert record.predicted_points[FOVEA].x == pytest.approx(20.5)
        assert record.fallback == {OD: False, FOVEA: True}
        assert [d.score for d in record.detections] == [0.75, 0.0]

    def test_bare_centers(self, workdir):
        ann = build_annotation('p', {OD: (20.0, 30.0), FOVEA: (40.0, 30.0)}, 64, 64)
        path = _write(workdir / 'pred.csv', HEADER + 'p,20,30,40,30\nother,1,1,1,1\n')
        [record] = read_predictions_csv(path, {'p': ann}, working_size=32)
        assert all(d.score == 1.0 for d in record.detections)
        assert record.detections[0].box.center == pytest.approx((10.0, 15.0))

    def test_no_match(self, workdir):
        ann = build_annotation('p', {OD: (20.0, 30.0)}, 64, 64)
        path = _write(workdir / 'pred.csv', HEADER + 'q,20,30,40,30\n')
        with pytest.raises(DataError):
            read_predictions_csv(path, {'p': ann}, working_size=32)


class TestManifest:
    def test_write_and_read(self, workdir):
        config = RunConfig(seed=7)
        path = write_manifest(workdir / 'run', config, ['train-detector', '--seed', '7'], {'images': 3})
        entries = read_manifest(path)
        assert entries['config_hash'] == config.config_hash()
        assert entries['seed'] == '7'
        assert entries['images'] == '3'
        assert entries['command'] == 'train-detector --seed 7'
        assert 'version.numpy' in entries
        with open(workdir / 'run' / 'run_config.yaml') as f:
            assert yaml.safe_load(f)['seed'] == 7


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
