"""
Configuration Management

Loads and manages configuration from files and environment variables.
Centralizes config for the data generator, training loop, CKA analysis
and the experiment harness.
"""

import configparser
import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

logger = logging.getLogger(__name__)

INI_SUFFIXES = {".cfg", ".ini", ".conf"}
YAML_SUFFIXES = {".yaml", ".yml"}


class ConfigManager:
    """
    Central configuration manager for biaslens.

    Loads configuration from:
    - Environment variables (highest priority)
    - a `key = value` / `[section]` file or a YAML file
    - Defaults
    """

    def __init__(self, config_path: Optional[str] = None, use_env: bool = True):
        self.config_path = Path(config_path) if config_path else None
        self.config: Dict[str, Any] = {}
        self._load_config(use_env)

    def _load_config(self, use_env: bool):
        """Load configuration from multiple sources"""
        self.config = self._get_defaults()

        if self.config_path is not None:
            # a missing file is an IO problem, not a validation one
            if not self.config_path.is_file():
                raise FileNotFoundError(f"Config file not found: {self.config_path}")
            file_config = self._read_file(self.config_path)
            self._merge(self.config, file_config)
            logger.info(f"Loaded config from {self.config_path}")

        if use_env:
            load_dotenv()
            self._load_env_vars()

    def _get_defaults(self) -> Dict[str, Any]:
        """Default configuration"""
        return {
            "data": {
                "num_classes": 10,
                "channels": 3,
                "height": 16,
                "width": 16,
                "diversity": 0.05,
                "train_count": 5000,
                "val_count": 500,
                "test_count": 1000,
                "dataset_path": None,
            },
            "model": {
                "preset": "mini_resnet",
                "widths": [8, 16],
                "stem_width": 8,
                "dropout": 0.4,
            },
            "training": {
                "lr": 1e-3,
                "weight_decay": 1e-5,
                "batch_size": 512,
                "patience": 12,
                "max_epochs": 60,
            },
            "losses": {
                "names": ["sce", "bce", "nll", "l1", "l2", "sos"],
                "alpha": 1.0,
                "beta": 1.0,
            },
            "seeds": {
                "values": [1, 2, 3],
            },
            "cka": {
                "batch_size": 512,
                "batches": 2,
                "tau": 0.9,
            },
            "output": {
                "dir": "runs",
            },
            "logging": {
                "level": "INFO",
                "json": False,
            },
            "threads": 1,
        }

    def _read_file(self, path: Path) -> Dict[str, Any]:
        suffix = path.suffix.lower()
        if suffix in YAML_SUFFIXES:
            with open(path) as f:
                loaded = yaml.safe_load(f) or {}
            if not isinstance(loaded, dict):
                raise ConfigError(f"{path}: top level must be a mapping")
            return loaded
        if suffix in INI_SUFFIXES or suffix == "":
            return self._read_ini(path)
        raise ConfigError(f"{path}: unsupported config format '{suffix}'")

    def _read_ini(self, path: Path) -> Dict[str, Any]:
        """Parse `key = value` lines grouped under `[section]` headers"""
        parser = configparser.ConfigParser(
            comment_prefixes=("#",),
            inline_comment_prefixes=("#",),
            interpolation=None,
        )
        try:
            with open(path) as f:
                parser.read_file(f)
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from e

        result: Dict[str, Any] = {}
        for section in parser.sections():
            result[section] = {
                key: self._coerce(value) for key, value in parser.items(section)
            }
        return result

    @staticmethod
    def _coerce(raw: str) -> Any:
        """Turn an INI string into int, float, bool, None or a list of those"""
        text = raw.strip()
        if "," in text:
            return [ConfigManager._coerce(part) for part in text.split(",") if part.strip()]
        lowered = text.lower()
        if lowered in ("true", "yes", "on"):
            return True
        if lowered in ("false", "no", "off"):
            return False
        if lowered in ("none", "null", ""):
            return None
        for cast in (int, float):
            try:
                return cast(text)
            except ValueError:
                pass
        return text

    def _merge(self, base: Dict[str, Any], override: Dict[str, Any]):
        for key, value in override.items():
            if isinstance(value, dict) and isinstance(base.get(key), dict):
                self._merge(base[key], value)
            else:
                base[key] = value

    def _load_env_vars(self):
        """Load configuration from environment variables"""
        env_mappings = {
            "BIASLENS_THREADS": ("threads", int),
            "BIASLENS_LOG_LEVEL": ("logging.level", str),
            "BIASLENS_LOG_JSON": ("logging.json", self._parse_bool),
            "BIASLENS_OUT": ("output.dir", str),
        }

        for env_var, (config_path, parser) in env_mappings.items():
            value = os.getenv(env_var)
            if value:
                try:
                    self.set(config_path, parser(value))
                except ValueError as e:
                    raise ConfigError(f"{env_var}={value!r}: {e}") from e
                logger.debug(f"Loaded {env_var} from environment")

    def set(self, path: str, value: Any):
        """Set nested config value using dot notation"""
        keys = path.split(".")
        config = self.config
        for key in keys[:-1]:
            config = config.setdefault(key, {})
        config[keys[-1]] = value

    @staticmethod
    def _parse_bool(value: str) -> bool:
        """Parse boolean from string"""
        return value.lower() in ("true", "1", "yes", "on")

    def get(self, path: str, default: Any = None) -> Any:
        """
        Get config value using dot notation.

        Example: config.get("training.patience")
        """
        keys = path.split(".")
        value = self.config

        for key in keys:
            if isinstance(value, dict):
                value = value.get(key)
            else:
                return default

            if value is None:
                return default

        return value

    def get_config_dict(self) -> Dict[str, Any]:
        """Get entire config as dictionary"""
        return copy.deepcopy(self.config)
