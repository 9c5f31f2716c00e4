"""
__init__.py for utils package

Exports configuration, logging, persistence and error helpers.
"""

from .config import ConfigManager
from .data_loader import DataLoader
from .errors import (
    ArgumentError,
    BiasLensError,
    ConfigError,
    DataError,
    DegenerateInputError,
    FormatError,
    ShapeError,
    StateError,
)
from .logging_setup import configure_logging

__all__ = [
    "ConfigManager",
    "DataLoader",
    "configure_logging",
    "BiasLensError",
    "ArgumentError",
    "ConfigError",
    "DataError",
    "DegenerateInputError",
    "FormatError",
    "ShapeError",
    "StateError",
]
