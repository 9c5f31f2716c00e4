"""
Error types

One exception family for the whole lab. Each category subclasses the
builtin it refines so callers can catch either.
"""

from typing import Optional


class BiasLensError(Exception):
    """Base class for every error raised by biaslens"""


class ShapeError(BiasLensError, ValueError):
    """Array shapes do not chain"""


class ArgumentError(BiasLensError, ValueError):
    """An argument is outside its documented domain"""


class StateError(BiasLensError, RuntimeError):
    """An object is used out of order (e.g. backward before forward)"""


class DataError(BiasLensError, ValueError):
    """A dataset split is empty or inconsistent"""


class DegenerateInputError(BiasLensError, ValueError):
    """Input carries no variance, so the statistic is undefined"""


class ConfigError(BiasLensError, ValueError):
    """Configuration failed validation"""


class FormatError(BiasLensError, ValueError):
    """A binary file does not match its format"""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
