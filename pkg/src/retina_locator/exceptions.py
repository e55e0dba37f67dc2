"""
Retina Locator - Custom Exception Classes
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from typing import Optional


class RetinaLocatorError(Exception):
    """Base exception for Retina Locator."""
    pass


class ConfigurationError(RetinaLocatorError):
    """Raised when there's a configuration issue."""
    pass


class DimensionError(RetinaLocatorError):
    """Raised when tensor or image shapes do not agree."""
    pass


class BatchSizeError(DimensionError):
    """Raised when batch statistics need more samples than were given."""
    pass


class ContractError(RetinaLocatorError):
    """Raised when an operation is called outside its contract."""
    pass


class GeometryError(RetinaLocatorError):
    """Raised for invalid boxes or points."""
    pass


class DataError(RetinaLocatorError):
    """Raised when input data is missing or unusable."""
    pass


class ParseError(DataError):
    """Raised when a CSV row cannot be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class FormatError(DataError):
    """Raised when a checkpoint file is malformed."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        suffix = f" (at byte offset {offset})" if offset is not None else ""
        super().__init__(f"{message}{suffix}")


class UsageError(RetinaLocatorError):
    """Raised for command-line usage errors."""
    pass
