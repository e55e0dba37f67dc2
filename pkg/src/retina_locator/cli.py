"""
Retina Locator - Command-line interface
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import load_run_config
from .data.dataset import load_dataset, read_predictions_csv, write_predictions_csv, write_unified_csv
from .data.manifest import write_manifest
from .data.synthetic import write_synthetic_dataset
from .evaluation.metrics import evaluate_records
from .evaluation.overlay import render_overlay
from .evaluation.report import ReportWriter
from .exceptions import ConfigurationError, DataError, GeometryError, UsageError
from .experiments import VARIANT_NAMES, compare_variants, relation_gap, select_variants
from .imaging.image import load_image, save_image
from .logging_config import setup_logging
from .models import DatasetRecord
from .pipeline import (
    LandmarkLocator,
    baseline_record,
    fit_baseline,
    fit_detector,
    fit_regressors,
    load_baseline,
    native_detection_boxes,
    normalization_stats,
    prepare_samples,
    save_baseline,
    save_detector,
    save_regressors,
)
from .settings import RunConfig

logger = logging.getLogger(__name__)

DETECTOR_FILE = 'detector.frl'
REGRESSOR_FILE = 'regressors.frl'
BASELINE_FILE = 'baseline.frl'


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _common(parser: argparse.ArgumentParser):
    parser.add_argument('--config', '-c', type=str, help='Config file (YAML or key = value lines)')
    parser.add_argument('--seed', type=int, help='Override the configured seed')
    parser.add_argument('--log-level', type=str, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                        default=None, help='Logging level (default: $RETINA_LOCATOR_LOG_LEVEL or INFO)')
    parser.add_argument('--log-file', type=str, help='Also write logs to this file')


def _data_args(parser: argparse.ArgumentParser, default_split: str):
    parser.add_argument('--data', type=str, help='Dataset directory with images/ and <split>.csv')
    parser.add_argument('--split', type=str, default=default_split,
                        help=f'CSV name inside --data (default: {default_split})')
    parser.add_argument('--images', type=str, help='Image directory (overrides <data>/images)')
    parser.add_argument('--csv', type=str, help='Unified CSV image,od_x,od_y,fov_x,fov_y')
    parser.add_argument('--od-csv', type=str, help='IDRiD optic disc CSV (with --fovea-csv)')
    parser.add_argument('--fovea-csv', type=str, help='IDRiD fovea CSV (with --od-csv)')


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog='retina-locator',
        description="Retina Locator - optic disc and fovea localization with a relation-augmented detector",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  retina-locator synth --n 80 --seed 0 --out data/
  retina-locator train-detector --data data/ --out ckpt/
  retina-locator train-regressor --data data/ --out ckpt/
  retina-locator predict --data data/ --checkpoints ckpt/ --out run/ --overlays run/overlays
  retina-locator evaluate --predictions run/predictions.csv --data data/ --out run/
  retina-locator compare --data data/ --out compare/
        """
    )
    parser.add_argument('--version', '-v', action='version', version=f'Retina Locator {__version__}')
    sub = parser.add_subparsers(dest='command', parser_class=ArgumentParser)

    p = sub.add_parser('synth', help='Write a synthetic fundus dataset')
    p.add_argument('--n', type=int, default=80, help='Number of images (default: 80)')
    p.add_argument('--out', type=str, required=True, help='Output dataset directory')
    _common(p)

    p = sub.add_parser('preprocess', help='Resize + CLAHE a dataset and report normalization stats')
    _data_args(p, 'annotations')
    p.add_argument('--out', type=str, required=True, help='Output directory')
    _common(p)

    p = sub.add_parser('train-detector', help='Train the relation-augmented detector')
    _data_args(p, 'train')
    p.add_argument('--out', type=str, required=True, help='Checkpoint directory')
    p.add_argument('--no-relation', action='store_true', help='Ablate the relation block')
    p.add_argument('--val-split', type=str, default='test',
                   help='Split monitored with mAP50 each epoch, if present (default: test)')
    _common(p)

    p = sub.add_parser('train-regressor', help='Train the per-class crop regressors')
    _data_args(p, 'train')
    p.add_argument('--out', type=str, required=True, help='Checkpoint directory')
    _common(p)

    p = sub.add_parser('train-baseline', help='Train the whole-image direct regression baseline')
    _data_args(p, 'train')
    p.add_argument('--out', type=str, required=True, help='Checkpoint directory')
    _common(p)

    p = sub.add_parser('predict', help='Two-stage inference, writes predictions.csv')
    _data_args(p, 'test')
    p.add_argument('--checkpoints', type=str, required=True, help='Checkpoint directory')
    p.add_argument('--out', type=str, required=True, help='Output directory')
    p.add_argument('--baseline', action='store_true', help='Predict with the direct regression baseline')
    p.add_argument('--overlays', type=str, help='Write overlay PNGs to this directory')
    _common(p)

    p = sub.add_parser('evaluate', help='Score a predictions CSV against ground truth')
    p.add_argument('--predictions', type=str, required=True, help='predictions.csv or a unified CSV')
    _data_args(p, 'test')
    p.add_argument('--out', type=str, help='Directory for metrics.txt / metrics.csv')
    p.add_argument('--overlays', type=str, help='Write overlay PNGs to this directory')
    _common(p)

    p = sub.add_parser('compare', help='Train and score every model variant on one split')
    _data_args(p, 'train')
    p.add_argument('--test-split', type=str, default='test', help='Held-out CSV name inside --data (default: test)')
    p.add_argument('--variants', nargs='+', choices=VARIANT_NAMES,
                   help=f"Variants to run (default: all of {', '.join(VARIANT_NAMES)})")
    p.add_argument('--out', type=str, required=True, help='Directory for comparison.txt / comparison.csv')
    _common(p)
    return parser


def _records(args: argparse.Namespace, config: RunConfig, split: Optional[str] = None) -> List[DatasetRecord]:
    data = Path(args.data) if args.data else None
    images = Path(args.images) if args.images else (data / 'images' if data else None)
    if images is None:
        raise UsageError("give --data or --images")
    if args.od_csv or args.fovea_csv:
        if not (args.od_csv and args.fovea_csv):
            raise UsageError("--od-csv and --fovea-csv go together")
        return load_dataset(images, od_csv=args.od_csv, fovea_csv=args.fovea_csv, geometry=config.geometry)
    if split is None and args.csv:
        csv_path = Path(args.csv)
    elif data is not None:
        csv_path = data / f"{split or args.split}.csv"
    else:
        raise UsageError("give --data or --csv")
    return load_dataset(images, combined_csv=csv_path, geometry=config.geometry)


def cmd_synth(args, config: RunConfig, argv: List[str]) -> int:
    out = write_synthetic_dataset(args.out, config.synth, args.n, config.geometry)
    write_manifest(out, config, argv, {'images': args.n})
    print(f"✓ Synthetic dataset written to {out}")
    return 0


def cmd_preprocess(args, config: RunConfig, argv: List[str]) -> int:
    records = _records(args, config)
    samples = prepare_samples(records, config)
    out = Path(args.out)
    for sample in samples:
        save_image(sample.image, out / 'images' / f"{sample.annotation.image_id}.png")
    write_unified_csv(out / f"{args.split}.csv", [s.annotation for s in samples])
    mean, std = normalization_stats(samples)
    write_manifest(out, config, argv, {
        'working_size': config.imaging.working_size,
        'input_mean': ','.join(f"{v:.6f}" for v in mean),
        'input_std': ','.join(f"{v:.6f}" for v in std),
    })
    print(f"✓ {len(samples)} preprocessed images written to {out}")
    return 0


def cmd_train_detector(args, config: RunConfig, argv: List[str]) -> int:
    if args.no_relation:
        config = config.model_copy(update={'relation': config.relation.model_copy(update={'enabled': False})})
    train = prepare_samples(_records(args, config), config)
    val = None
    if args.data and args.val_split and (Path(args.data) / f"{args.val_split}.csv").is_file():
        val = prepare_samples(_records(args, config, args.val_split), config)
    out = Path(args.out)
    model, history = fit_detector(config, train, val, out / 'detector_log.jsonl')
    save_detector(model, out / DETECTOR_FILE)
    extra = {'detector_epochs': len(history), 'relation': config.relation.enabled}
    if history and 'val_mAP50' in history[-1]:
        extra['val_mAP50'] = f"{history[-1]['val_mAP50']:.4f}"
    write_manifest(out, config, argv, extra, name='detector_manifest.txt')
    print(f"✓ Detector checkpoint written to {out / DETECTOR_FILE}")
    return 0


def cmd_train_regressor(args, config: RunConfig, argv: List[str]) -> int:
    train = prepare_samples(_records(args, config), config)
    out = Path(args.out)
    regressors = fit_regressors(config, train, out)
    save_regressors(regressors, out / REGRESSOR_FILE)
    write_manifest(out, config, argv, {'regressor_steps': config.regressor.steps}, name='regressor_manifest.txt')
    print(f"✓ Regressor checkpoint written to {out / REGRESSOR_FILE}")
    return 0


def cmd_train_baseline(args, config: RunConfig, argv: List[str]) -> int:
    train = prepare_samples(_records(args, config), config)
    out = Path(args.out)
    model = fit_baseline(config, train, out / 'baseline_log.jsonl')
    save_baseline(model, out / BASELINE_FILE)
    write_manifest(out, config, argv, {'baseline_steps': config.baseline.steps}, name='baseline_manifest.txt')
    print(f"✓ Baseline checkpoint written to {out / BASELINE_FILE}")
    return 0


def _write_overlay(record, native_image, overlay_dir: Path):
    pred_boxes = native_detection_boxes(record) if record.detections else None
    image = render_overlay(native_image, record.annotation, record.native_points or None, pred_boxes)
    save_image(image, overlay_dir / f"{record.image_id}.png")


def cmd_predict(args, config: RunConfig, argv: List[str]) -> int:
    records = _records(args, config)
    ckpt = Path(args.checkpoints)
    out = Path(args.out)
    overlay_dir = Path(args.overlays) if args.overlays else None

    results = []
    if args.baseline:
        if not (ckpt / BASELINE_FILE).is_file():
            raise DataError(f"No baseline checkpoint at {ckpt / BASELINE_FILE}; run train-baseline first")
        model = load_baseline(ckpt / BASELINE_FILE, config)
        for record in records:
            results.append(baseline_record(model, record, config))
            if overlay_dir:
                _write_overlay(results[-1], load_image(record.image_path), overlay_dir)
    else:
        if not (ckpt / DETECTOR_FILE).is_file():
            raise DataError(f"No detector checkpoint at {ckpt / DETECTOR_FILE}; run train-detector first")
        regressor_path = ckpt / REGRESSOR_FILE
        locator = LandmarkLocator.from_checkpoints(config, ckpt / DETECTOR_FILE,
                                                   regressor_path if regressor_path.is_file() else None)
        for record in records:
            eval_record, native_image = locator.predict_record(record)
            results.append(eval_record)
            if overlay_dir:
                _write_overlay(eval_record, native_image, overlay_dir)

    path = write_predictions_csv(out / 'predictions.csv', results)
    write_manifest(out, config, argv, {'images': len(results), 'model': 'baseline' if args.baseline else 'two-stage'})
    print(f"✓ Predictions for {len(results)} images written to {path}")
    return 0


def cmd_evaluate(args, config: RunConfig, argv: List[str]) -> int:
    records = _records(args, config)
    truth = {r.image_id: r.annotation for r in records}
    predictions = read_predictions_csv(args.predictions, truth, config.imaging.working_size, config.geometry)
    report = evaluate_records(predictions, config.evaluation, config.geometry)
    writer = ReportWriter()
    print(writer.render_text(report, title=str(args.predictions), config_hash=config.config_hash()))
    if args.out:
        writer.write(report, args.out, title=str(args.predictions), config_hash=config.config_hash())
        write_manifest(args.out, config, argv, {'images': report.num_images}, name='evaluation_manifest.txt')
    if args.overlays:
        paths = {r.image_id: r.image_path for r in records}
        for record in predictions:
            _write_overlay(record, load_image(paths[record.image_id]), Path(args.overlays))
    return 0


def cmd_compare(args, config: RunConfig, argv: List[str]) -> int:
    if not args.data:
        raise UsageError("compare needs --data with both splits")
    variants = select_variants(args.variants)
    train = _records(args, config)
    test = _records(args, config, args.test_split)
    out = Path(args.out)
    results = compare_variants(config, train, test, variants, out / 'logs')
    gap = relation_gap(results)
    writer = ReportWriter()
    title = f"{args.data} ({args.split} -> {args.test_split})"
    print(writer.render_comparison(results, title, config.config_hash(), gap))
    writer.write_comparison(results, out, title, config.config_hash(), gap)
    write_manifest(out, config, argv, {'variants': ','.join(v.name for v in variants), 'test_images': len(test)},
                   name='comparison_manifest.txt')
    return 0


COMMANDS = {
    'synth': cmd_synth,
    'preprocess': cmd_preprocess,
    'train-detector': cmd_train_detector,
    'train-regressor': cmd_train_regressor,
    'train-baseline': cmd_train_baseline,
    'predict': cmd_predict,
    'evaluate': cmd_evaluate,
    'compare': cmd_compare,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 1
    if not args.command:
        parser.print_help(sys.stderr)
        return 1

    setup_logging(level=args.log_level, log_file=args.log_file)

    try:
        config = load_run_config(args.config, args.seed)
        return COMMANDS[args.command](args, config, ['retina-locator'] + argv)

    except KeyboardInterrupt:
        print("\n\n⚠️  Operation cancelled by user", file=sys.stderr)
        return 130

    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    except (DataError, ConfigurationError, GeometryError) as e:
        logger.error(str(e))
        print(f"\n❌ Error: {e}", file=sys.stderr)
        return 2

    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print(f"\n❌ Error: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
