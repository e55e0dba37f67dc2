"""
Retina Locator - Tests for the command-line interface
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import csv
import tempfile
from pathlib import Path

import pytest
import yaml

from retina_locator.cli import BASELINE_FILE, DETECTOR_FILE, REGRESSOR_FILE, build_parser, main
from retina_locator.data.manifest import read_manifest


@pytest.fixture
def workdir():
    with tempfile.TemporaryDirectory() as tmp:
        yield Path(tmp)


@pytest.fixture
def config_file(workdir, tiny_config):
    """The tiny run settings written as a YAML config file."""
    path = workdir / 'tiny.yaml'
    path.write_text(yaml.safe_dump(tiny_config.model_dump(mode='json')), encoding='utf-8')
    return str(path)


def _synth(workdir, config_file, n=4):
    data = workdir / 'data'
    assert main(['synth', '--n', str(n), '--out', str(data), '--config', config_file]) == 0
    return data


def _metrics(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


class TestParser:
    def test_subcommands(self):
        args = build_parser().parse_args(['predict', '--data', 'd', '--checkpoints', 'c', '--out', 'o'])
        assert args.command == 'predict'
        assert args.split == 'test'
        assert not args.baseline

    def test_unknown_flag_is_usage_error(self):
        assert main(['synth', '--out', 'x', '--bogus']) == 1

    def test_no_command(self):
        assert main([]) == 1

    def test_missing_data_arguments(self, workdir, config_file):
        assert main(['preprocess', '--out', str(workdir / 'o'), '--config', config_file]) == 1

    def test_bad_config_exits_2(self, workdir):
        path = workdir / 'bad.yaml'
        path.write_text("detector:\n  epochz: 1\n", encoding='utf-8')
        assert main(['synth', '--out', str(workdir / 'd'), '--config', str(path)]) == 2

    def test_compare_variants_are_checked(self):
        args = build_parser().parse_args(['compare', '--data', 'd', '--out', 'o', '--variants', 'nms', 'baseline'])
        assert args.variants == ['nms', 'baseline'] and args.test_split == 'test'
        assert main(['compare', '--data', 'd', '--out', 'o', '--variants', 'resnet']) == 1


class TestCommands:
    def test_synth_writes_dataset_and_manifest(self, workdir, config_file):
        data = _synth(workdir, config_file)
        assert len(list((data / 'images').glob('*.png'))) == 4
        for name in ('train.csv', 'test.csv', 'annotations.csv', 'run_config.yaml'):
            assert (data / name).is_file()
        manifest = read_manifest(data / 'manifest.txt')
        assert manifest['images'] == '4'
        assert len(manifest['config_hash']) == 64

    def test_predict_without_checkpoint(self, workdir, config_file):
        data = _synth(workdir, config_file)
        code = main(['predict', '--data', str(data), '--checkpoints', str(workdir / 'none'),
                     '--out', str(workdir / 'pred'), '--config', config_file])
        assert code == 2

    def test_evaluate_ground_truth_as_predictions(self, workdir, config_file):
        data = _synth(workdir, config_file)
        out = workdir / 'eval'
        code = main(['evaluate', '--predictions', str(data / 'test.csv'), '--data', str(data),
                     '--split', 'test', '--out', str(out), '--config', config_file])
        assert code == 0
        rows = _metrics(out / 'metrics.csv')
        distances = [r['value'] for r in rows if r['metric'] == 'mean_distance']
        assert distances and all(float(v) == 0.0 for v in distances)
        assert [r['value'] for r in rows if r['metric'] == 'mAP_50'] == ['1.000000']
        assert (out / 'metrics.txt').is_file()

    def test_preprocess(self, workdir, config_file, tiny_config):
        data = _synth(workdir, config_file)
        out = workdir / 'pre'
        assert main(['preprocess', '--data', str(data), '--split', 'train', '--out', str(out),
                     '--config', config_file]) == 0
        assert len(list((out / 'images').glob('*.png'))) == 3
        manifest = read_manifest(out / 'manifest.txt')
        assert len(manifest['input_mean'].split(',')) == 3
        assert manifest['working_size'] == str(tiny_config.imaging.working_size)


@pytest.mark.slow
class TestEndToEnd:
    """synth -> train -> predict -> evaluate on the tiny settings."""

    def test_two_stage_run(self, workdir, config_file):
        data = _synth(workdir, config_file, n=8)
        ckpt = workdir / 'ckpt'
        common = ['--data', str(data), '--config', config_file]
        assert main(['train-detector', '--split', 'train', '--out', str(ckpt)] + common) == 0
        assert main(['train-regressor', '--split', 'train', '--out', str(ckpt)] + common) == 0
        assert (ckpt / DETECTOR_FILE).is_file() and (ckpt / REGRESSOR_FILE).is_file()
        assert (ckpt / 'detector_log.jsonl').is_file()

        first, second = workdir / 'p1', workdir / 'p2'
        for out in (first, second):
            assert main(['predict', '--checkpoints', str(ckpt), '--out', str(out),
                         '--overlays', str(out / 'overlays')] + common) == 0
        assert (first / 'predictions.csv').read_text() == (second / 'predictions.csv').read_text()
        assert len(list((first / 'overlays').glob('*.png'))) == 2

        assert main(['evaluate', '--predictions', str(first / 'predictions.csv'), '--out',
                     str(workdir / 'eval')] + common) == 0
        metrics = {r['metric']: r['value'] for r in _metrics(workdir / 'eval' / 'metrics.csv') if r['name'] == 'all'}
        assert 0.0 <= float(metrics['mAP_50_95']) <= 1.0

    def test_baseline_run(self, workdir, config_file):
        data = _synth(workdir, config_file, n=8)
        ckpt = workdir / 'ckpt'
        common = ['--data', str(data), '--config', config_file]
        assert main(['train-baseline', '--split', 'train', '--out', str(ckpt)] + common) == 0
        assert (ckpt / BASELINE_FILE).is_file()
        assert main(['predict', '--baseline', '--checkpoints', str(ckpt), '--out', str(workdir / 'p')] + common) == 0
        assert read_manifest(workdir / 'p' / 'manifest.txt')['model'] == 'baseline'

    def test_detector_without_relation(self, workdir, config_file):
        data = _synth(workdir, config_file)
        ckpt = workdir / 'ckpt'
        common = ['--data', str(data), '--config', config_file]
        assert main(['train-detector', '--no-relation', '--split', 'train', '--out', str(ckpt)] + common) == 0
        assert read_manifest(ckpt / 'detector_manifest.txt')['relation'] == 'False'
        assert main(['predict', '--checkpoints', str(ckpt), '--out', str(workdir / 'p')] + common) == 0

    def test_compare(self, workdir, config_file):
        data = _synth(workdir, config_file, n=8)
        out = workdir / 'compare'
        assert main(['compare', '--data', str(data), '--out', str(out), '--config', config_file,
                     '--variants', 'two-stage', 'no-relation', 'baseline']) == 0
        rows = _metrics(out / 'comparison.csv')
        assert {r['variant'] for r in rows} == {'two-stage', 'no-relation', 'baseline'}
        assert 'Relation block mAP50 gain' in (out / 'comparison.txt').read_text(encoding='utf-8')
        assert read_manifest(out / 'comparison_manifest.txt')['test_images'] == '2'


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
