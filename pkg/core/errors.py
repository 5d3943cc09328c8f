# core/errors.py

from typing import Optional


class ConfigError(ValueError):
    """Raised when a run configuration cannot be built or validated."""


class FieldFileError(ValueError):
    """Raised when a field file cannot be parsed. Carries the offending line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
