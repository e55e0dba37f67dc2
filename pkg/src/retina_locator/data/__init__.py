"""
Retina Locator - Dataset I/O
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from .checkpoint import load_checkpoint, load_modules, save_checkpoint, save_modules
from .dataset import (
    load_dataset,
    read_predictions_csv,
    read_unified_csv,
    write_predictions_csv,
    write_unified_csv,
)
from .manifest import write_manifest
from .synthetic import generate_synthetic, write_synthetic_dataset

__all__ = [
    'load_dataset', 'read_unified_csv', 'write_unified_csv', 'read_predictions_csv', 'write_predictions_csv',
    'generate_synthetic', 'write_synthetic_dataset', 'save_checkpoint', 'load_checkpoint',
    'save_modules', 'load_modules', 'write_manifest',
]
