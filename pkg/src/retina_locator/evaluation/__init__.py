"""
Retina Locator - Evaluation
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from .metrics import average_precision, evaluate_records, map_suite, mean_ap, mean_euclidean
from .overlay import render_overlay
from .report import ReportWriter, write_metrics_csv

__all__ = [
    'average_precision', 'map_suite', 'mean_ap', 'mean_euclidean', 'evaluate_records',
    'render_overlay', 'ReportWriter', 'write_metrics_csv',
]
