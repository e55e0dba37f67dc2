"""
Retina Locator - Metric report writers
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import csv
import logging
from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple, Union

from jinja2 import Environment, FileSystemLoader, select_autoescape

from ..models import LANDMARK_CLASSES, MetricReport

if TYPE_CHECKING:
    from ..experiments import VariantResult

logger = logging.getLogger(__name__)

# Published full-scale results, shown for orientation only
REFERENCE_VALUES = {
    'map_50_95': 69.4,
    'map_50': 97.3,
    'map_75': 80.2,
    'optic_disc': 26.12,
    'fovea': 43.46,
}


class ReportWriter:
    """Renders a MetricReport as a text report and as metric CSV rows."""

    def __init__(self, include_reference: bool = True):
        template_dir = Path(__file__).parent.parent / 'templates'
        self.env = Environment(
            loader=FileSystemLoader(str(template_dir)),
            autoescape=select_autoescape(['html', 'xml']),
            keep_trailing_newline=True,
        )
        self.include_reference = include_reference

    def render_text(self, report: MetricReport, title: Optional[str] = None,
                    config_hash: Optional[str] = None) -> str:
        template = self.env.get_template('report.txt.j2')
        return template.render(
            report=report,
            title=title,
            config_hash=config_hash,
            classes=[c.value for c in LANDMARK_CLASSES if c.value not in report.excluded_classes],
            reference=REFERENCE_VALUES if self.include_reference else None,
        )

    def write(self, report: MetricReport, out_dir: Union[str, Path], title: Optional[str] = None,
              config_hash: Optional[str] = None) -> Tuple[Path, Path]:
        """Write ``metrics.txt`` and ``metrics.csv`` into ``out_dir``.

        Returns:
            Paths of the text and CSV reports
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        text_path = out_dir / 'metrics.txt'
        text_path.write_text(self.render_text(report, title, config_hash), encoding='utf-8')
        csv_path = write_metrics_csv(report, out_dir / 'metrics.csv')
        logger.info(f"Metric report written to {text_path} and {csv_path}")
        return text_path, csv_path

    def render_comparison(self, results: Sequence["VariantResult"], title: Optional[str] = None,
                          config_hash: Optional[str] = None, relation_gap: Optional[float] = None) -> str:
        template = self.env.get_template('comparison.txt.j2')
        return template.render(
            rows=results,
            title=title,
            config_hash=config_hash,
            classes=[c.value for c in LANDMARK_CLASSES],
            relation_gap=relation_gap,
        )

    def write_comparison(self, results: Sequence["VariantResult"], out_dir: Union[str, Path],
                         title: Optional[str] = None, config_hash: Optional[str] = None,
                         relation_gap: Optional[float] = None) -> Tuple[Path, Path]:
        """Write ``comparison.txt`` and ``comparison.csv`` into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        text_path = out_dir / 'comparison.txt'
        text_path.write_text(self.render_comparison(results, title, config_hash, relation_gap), encoding='utf-8')
        csv_path = out_dir / 'comparison.csv'
        with open(csv_path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(['variant', 'metric', 'name', 'value'])
            for result in results:
                for metric, name, value in metric_rows(result.report):
                    if not metric.startswith('distance_'):
                        writer.writerow([result.variant.name, metric, name, value])
        logger.info(f"Comparison written to {text_path} and {csv_path}")
        return text_path, csv_path


def metric_rows(report: MetricReport) -> List[Tuple[str, str, str]]:
    """(metric, name, value) rows; ``name`` is the class or image the value refers to."""
    rows = [
        ('mAP_50_95', 'all', f"{report.map_50_95:.6f}"),
        ('mAP_50', 'all', f"{report.map_50:.6f}"),
        ('mAP_75', 'all', f"{report.map_75:.6f}"),
    ]
    for label, table in report.per_class_ap.items():
        for threshold, ap in table.items():
            rows.append((f"AP_{threshold}", label, f"{ap:.6f}"))
    for label, value in report.mean_distance.items():
        rows.append(('mean_distance', label, f"{value:.6f}"))
    for label, count in report.fallback_counts.items():
        rows.append(('fallback_count', label, str(count)))
    for label, pairs in report.distances.items():
        for image_id, distance in pairs:
            rows.append((f"distance_{label}", image_id, f"{distance:.6f}"))
    return rows


def write_metrics_csv(report: MetricReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['metric', 'name', 'value'])
        writer.writerows(metric_rows(report))
    return path
