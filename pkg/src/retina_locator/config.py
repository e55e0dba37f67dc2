"""
Retina Locator - Configuration management
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from .exceptions import ConfigurationError
from .settings import RunConfig


class Config:
    """Configuration manager.
    
    Reads YAML files or line-oriented ``key = value`` files whose keys are
    dotted section paths (``detector.epochs = 8``). Values are validated into a
    :class:`RunConfig` by :meth:`run_config`.
    """
    
    def __init__(self, config_file: Optional[str] = None):
        """Initialize configuration.
        
        Args:
            config_file: Path to a config file. If None, looks for config.yaml
        """
        load_dotenv()
        
        self.config_file = config_file or self._find_config_file()
        self.config: Dict[str, Any] = {}
        
        if config_file and not os.path.exists(config_file):
            raise ConfigurationError(f"Config file not found: {config_file}")
        
        if self.config_file and os.path.exists(self.config_file):
            self._load_config()
        else:
            self._load_defaults()
    
    def _find_config_file(self) -> Optional[str]:
        """Find config file in common locations."""
        search_paths = [
            os.getenv('RETINA_LOCATOR_CONFIG', ''),
            "config.yaml",
            "config.yml",
            os.path.expanduser("~/.retina-locator/config.yaml"),
        ]
        
        for path in search_paths:
            if path and os.path.exists(path):
                return path
        
        return None
    
    def _load_config(self):
        """Load configuration from a YAML or key = value file."""
        with open(self.config_file, 'r', encoding='utf-8') as f:
            text = f.read()
        
        if Path(self.config_file).suffix.lower() in ('.yaml', '.yml'):
            try:
                loaded = yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                raise ConfigurationError(f"{self.config_file}: invalid YAML: {e}") from e
            if not isinstance(loaded, dict):
                raise ConfigurationError(f"{self.config_file}: top level must be a mapping")
            self.config = loaded
        else:
            self.config = {}
            self._parse_key_values(text)
    
    def _parse_key_values(self, text: str):
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigurationError(f"{self.config_file}:{line_no}: expected 'key = value'")
            key, value = (part.strip() for part in line.split('=', 1))
            if not key:
                raise ConfigurationError(f"{self.config_file}:{line_no}: empty key")
            try:
                parsed = yaml.safe_load(value) if value else None
            except yaml.YAMLError as e:
                raise ConfigurationError(f"{self.config_file}:{line_no}: bad value {value!r}") from e
            self.set(key, parsed)
    
    def _load_defaults(self):
        """Load default configuration."""
        self.config = RunConfig().model_dump(mode="json")
    
    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by dot-notation key.
        
        Args:
            key: Configuration key in dot notation (e.g., 'detector.epochs')
            default: Default value if key not found
        
        Returns:
            Configuration value
        """
        keys = key.split('.')
        value = self.config
        
        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        
        return value
    
    def set(self, key: str, value: Any):
        """Set configuration value by dot-notation key.
        
        Args:
            key: Configuration key in dot notation
            value: Value to set
        """
        keys = key.split('.')
        config = self.config
        
        for k in keys[:-1]:
            if k not in config or not isinstance(config[k], dict):
                config[k] = {}
            config = config[k]
        
        config[keys[-1]] = value
    
    def run_config(self) -> RunConfig:
        """Validate the loaded values.
        
        Returns:
            RunConfig with defaults filled in
        
        Raises:
            ConfigurationError: on unknown keys or invalid values
        """
        try:
            return RunConfig.model_validate(self.config)
        except ValidationError as e:
            source = self.config_file or "<defaults>"
            raise ConfigurationError(f"Invalid configuration in {source}:\n{e}") from e
    
    def save(self, output_file: Optional[str] = None):
        """Save configuration to file.
        
        Args:
            output_file: Path to save config. If None, uses original file.
        """
        output = output_file or self.config_file or 'config.yaml'
        
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        
        with open(output, 'w', encoding='utf-8') as f:
            yaml.dump(self.config, f, default_flow_style=False)


def load_run_config(config_file: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    """Load and validate a run configuration, applying a seed override."""
    config = Config(config_file)
    if seed is not None:
        config.set('seed', seed)
        config.set('synth.seed', seed)
    return config.run_config()
