"""Exception types shared across the package."""


class MMAEError(Exception):
    """Base class for all package errors."""


class ConfigError(MMAEError, ValueError):
    """Invalid configuration (bad key, value, or incompatible combination)."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = list(keys)


class InputError(MMAEError, ValueError):
    """An array or latent does not match the declared shape."""


class NumericalDomainError(MMAEError, ArithmeticError):
    """An operation was applied outside its numerical domain (e.g. zero norm)."""


class EvaluationError(MMAEError, ValueError):
    """Metric inputs are degenerate (no regions, no negatives, one class)."""


class IngestionError(MMAEError, OSError):
    """A dataset file is missing or unreadable."""


class TrainingError(MMAEError, RuntimeError):
    """Training diverged or could not start."""
