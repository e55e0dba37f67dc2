"""
Retina Locator - Run manifests
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
import platform
from datetime import datetime
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import yaml

from ..settings import RunConfig

logger = logging.getLogger(__name__)

TRACKED_PACKAGES = ('retina-locator', 'numpy', 'Pillow', 'pydantic', 'PyYAML', 'Jinja2', 'python-dotenv')


def package_versions() -> Dict[str, str]:
    versions = {'python': platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = 'unknown'
    return versions


def manifest_entries(config: RunConfig, command: Sequence[str],
                     extra: Optional[Dict[str, object]] = None) -> Dict[str, str]:
    entries = {
        'config_hash': config.config_hash(),
        'seed': str(config.seed),
        'command': ' '.join(command),
        'created': datetime.now().isoformat(timespec='seconds'),
    }
    entries.update({f'version.{name}': v for name, v in package_versions().items()})
    for key, value in (extra or {}).items():
        entries[key] = str(value)
    return entries


def write_manifest(out_dir: Union[str, Path], config: RunConfig, command: Sequence[str],
                   extra: Optional[Dict[str, object]] = None, name: str = 'manifest.txt') -> Path:
    """Write ``key=value`` run metadata plus the resolved config next to an output.

    Returns:
        Path of the manifest file
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    lines = [f"{key}={value}" for key, value in manifest_entries(config, command, extra).items()]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    with open(out_dir / 'run_config.yaml', 'w', encoding='utf-8') as f:
        yaml.safe_dump(config.model_dump(mode='json'), f, default_flow_style=False, sort_keys=True)
    logger.debug(f"Manifest written to {path}")
    return path


def read_manifest(path: Union[str, Path]) -> Dict[str, str]:
    entries = {}
    for line in Path(path).read_text(encoding='utf-8').splitlines():
        if '=' in line:
            key, value = line.split('=', 1)
            entries[key] = value
    return entries
