"""Exception types shared across the package.

The CLI maps ConfigurationError to exit code 1 and DataError (and its
subclasses) to exit code 2.
"""


class ConfigurationError(ValueError):
    """Invalid configuration: unknown tap, bad thresholds, missing flags."""


class DataError(ValueError):
    """Invalid or unreadable input data."""


class ShapeError(DataError):
    """Array shape does not match the operation's contract."""


class WeightFormatError(DataError):
    """Weight file is not a valid BWF1 stream (bad magic, version, truncation)."""


class WeightValidationError(DataError):
    """Weight tensors do not fit the canonical VGG16 plan."""


class IngestionError(DataError):
    """Dataset rows, split files or feature rows are missing or inconsistent."""


class UndefinedCorrelationError(DataError):
    """Pearson correlation requested for a constant input."""
