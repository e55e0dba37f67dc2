"""
Retina Locator - Variant comparison on a shared split
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Trains the two-stage pipeline and its ablations on one train split and
scores them on the same held-out records, so their metrics line up.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from .evaluation.metrics import evaluate_records
from .exceptions import UsageError
from .models import DatasetRecord, MetricReport
from .pipeline import LandmarkLocator, baseline_record, fit_baseline, fit_detector, fit_regressors, prepare_samples
from .settings import RunConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Variant:
    """One model configuration of a comparison run."""

    name: str
    description: str
    relation: bool = True
    duplicate_removal: str = 'learned'
    baseline: bool = False


VARIANTS = (
    Variant('two-stage', 'relation block, learned duplicate removal, crop regressors'),
    Variant('nms', 'relation block, classical NMS, crop regressors', duplicate_removal='nms'),
    Variant('no-relation', 'detector without relation block, crop regressors', relation=False),
    Variant('baseline', 'whole-image direct regression', baseline=True),
)
VARIANT_NAMES = tuple(v.name for v in VARIANTS)


@dataclass
class VariantResult:
    variant: Variant
    report: MetricReport


def variant_config(config: RunConfig, variant: Variant) -> RunConfig:
    relation = config.relation.model_copy(update={'enabled': variant.relation})
    detector = config.detector.model_copy(update={'duplicate_removal': variant.duplicate_removal})
    return config.model_copy(update={'relation': relation, 'detector': detector})


def select_variants(names: Optional[Sequence[str]] = None) -> List[Variant]:
    if not names:
        return list(VARIANTS)
    by_name = {v.name: v for v in VARIANTS}
    unknown = [n for n in names if n not in by_name]
    if unknown:
        raise UsageError(f"Unknown variants {unknown}; choose from {', '.join(VARIANT_NAMES)}")
    return [by_name[n] for n in names]


def compare_variants(config: RunConfig, train_records: Sequence[DatasetRecord],
                     test_records: Sequence[DatasetRecord], variants: Optional[Sequence[Variant]] = None,
                     log_dir: Optional[Union[str, Path]] = None) -> List[VariantResult]:
    """Train every variant on ``train_records`` and evaluate it on ``test_records``.

    Preprocessed samples and the crop regressors are shared by all detector
    variants; each detector and the baseline are trained from the configured seed.

    Args:
        config: base run settings
        train_records: training split
        test_records: held-out split, identical for every variant
        variants: subset to run (default: all of ``VARIANTS``)
        log_dir: directory for the per-variant training logs

    Returns:
        One result per variant, in the order given
    """
    variants = list(variants) if variants is not None else list(VARIANTS)
    log_dir = Path(log_dir) if log_dir else None
    train = prepare_samples(train_records, config)
    regressors = None
    results = []

    for variant in variants:
        run_config = variant_config(config, variant)
        logger.info(f"Variant {variant.name}: {variant.description}")
        if variant.baseline:
            model = fit_baseline(run_config, train, log_dir / 'baseline_log.jsonl' if log_dir else None)
            records = [baseline_record(model, r, run_config) for r in test_records]
        else:
            if regressors is None:
                regressors = fit_regressors(config, train, log_dir)
            detector, _ = fit_detector(run_config, train, None,
                                       log_dir / f'detector_{variant.name}.jsonl' if log_dir else None)
            records = LandmarkLocator(run_config, detector, regressors).predict(test_records)
        report = evaluate_records(records, config.evaluation, config.geometry)
        distances = ', '.join(f"{k}={v:.3f}px" for k, v in report.mean_distance.items())
        logger.info(f"✓ {variant.name}: mAP50={report.map_50:.4f} {distances}")
        results.append(VariantResult(variant, report))

    return results


def relation_gap(results: Sequence[VariantResult]) -> Optional[float]:
    """mAP50 of the relation detector minus its ablation, or None if either is missing.

    A tie is logged as a warning: small synthetic runs can saturate both.
    """
    by_name: Dict[str, MetricReport] = {r.variant.name: r.report for r in results}
    if 'two-stage' not in by_name or 'no-relation' not in by_name:
        return None
    gap = by_name['two-stage'].map_50 - by_name['no-relation'].map_50
    if gap == 0.0:
        logger.warning(f"Relation ablation ties at mAP50={by_name['two-stage'].map_50:.4f}")
    elif gap < 0.0:
        logger.warning(f"Ablated detector scores higher mAP50 than the relation detector by {-gap:.4f}")
    return gap
