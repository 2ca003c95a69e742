"""Exception hierarchy. Each class maps to one documented CLI exit code."""

from __future__ import annotations


class PCGainError(Exception):
    exit_code = 1


class ConfigError(PCGainError, ValueError):
    exit_code = 2


class DataError(PCGainError, ValueError):
    exit_code = 3


class NothingToImputeError(DataError):
    exit_code = 4


class DivergenceError(PCGainError, FloatingPointError):
    """Raised when a loss or gradient stops being finite.

    ``diagnostics`` carries the iteration index, the stage name (when known)
    and the loss trace up to the failure.
    """

    exit_code = 5

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class StageError(PCGainError):
    """Wraps a failure inside one stage of the PC-GAIN pipeline."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
