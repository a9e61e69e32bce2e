"""Exception types raised across the package."""


class AEMError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AEMError, ValueError):
    """Inconsistent shapes, dimensions or hyperparameters."""


class UsageError(AEMError, RuntimeError):
    """An API was called in the wrong order or with invalid arguments."""


class EvaluationError(AEMError, FloatingPointError):
    """A numerical evaluation produced non-finite values."""


class ParseError(AEMError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InputError(AEMError, ValueError):
    """Unreadable or unusable input data (e.g. an all-black image)."""


class TrainingDiverged(AEMError, FloatingPointError):
    """Raised when the training loss becomes non-finite.

    ``checkpoint`` holds the last good checkpoint so the caller can persist it.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
