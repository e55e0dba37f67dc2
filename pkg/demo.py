"""
Retina Locator - Demo script: synthetic data through both stages
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from pathlib import Path

from retina_locator.data.dataset import load_dataset
from retina_locator.data.synthetic import write_synthetic_dataset
from retina_locator.evaluation.metrics import evaluate_records
from retina_locator.evaluation.report import ReportWriter
from retina_locator.logging_config import setup_logging
from retina_locator.pipeline import LandmarkLocator, fit_detector, fit_regressors, prepare_samples
from retina_locator.settings import RunConfig


def demo_config() -> RunConfig:
    """Small settings that train in a few minutes on a laptop CPU."""
    return RunConfig.model_validate({
        'seed': 0,
        'imaging': {'working_size': 64, 'crop_size': 32, 'clahe_tiles_x': 4, 'clahe_tiles_y': 4},
        'relation': {'feature_dim': 32, 'num_heads': 2, 'key_dim': 16, 'geo_dim': 32, 'top_k': 8},
        'detector': {'backbone_channels': [8, 16, 16, 32], 'epochs': 4, 'dr_top_n': 8},
        'regressor': {'channels': [8, 16], 'steps': 100, 'log_every': 25},
        'synth': {'width': 192, 'height': 128, 'disc_radius_min': 9.0, 'disc_radius_max': 13.0},
    })


def run_demo(out_dir: str = './demo_run'):
    """Synthesize a dataset, train detector and regressors, score the test split."""
    setup_logging(level='WARNING')
    config = demo_config()
    out = Path(out_dir)

    print("👁️  Retina Locator - Demo Mode")
    print("=" * 60)
    print()

    print("🧪 Writing synthetic fundus images...")
    data = write_synthetic_dataset(out / 'data', config.synth, 40, config.geometry)
    train = load_dataset(data / 'images', combined_csv=data / 'train.csv', geometry=config.geometry)
    test = load_dataset(data / 'images', combined_csv=data / 'test.csv', geometry=config.geometry)
    print(f"✓ {len(train)} training / {len(test)} test images in {data}")
    print()

    print("🔎 Training the detector...")
    samples = prepare_samples(train, config)
    detector, history = fit_detector(config, samples, log_path=out / 'detector_log.jsonl')
    print(f"✓ Final epoch loss {history[-1]['loss']:.4f}")
    print()

    print("🎯 Training the crop regressors...")
    regressors = fit_regressors(config, samples, out)
    print("✓ Regressors trained")
    print()

    locator = LandmarkLocator(config, detector, regressors)
    report = evaluate_records(locator.predict(test), config.evaluation, config.geometry)
    print(ReportWriter().render_text(report, title='demo test split', config_hash=config.config_hash()))
    print("=" * 60)
    print(f"📁 Outputs: {out}")


if __name__ == '__main__':
    run_demo()
