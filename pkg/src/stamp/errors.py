"""Exception hierarchy shared across the package."""


class StampError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(StampError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(StampError):
    """A configuration value is out of range or inconsistent."""


class DataError(StampError):
    """Input data violates a contract (bad label, empty split, ...)."""


class FormatError(StampError):
    """A serialized file is malformed; message includes the byte offset."""


class UsageError(StampError):
    """The API or CLI was called incorrectly."""


class UndefinedMetricError(StampError):
    """A metric has no defined value on this input (e.g. one-class AUROC)."""


class TrainingAbort(StampError):
    """Training stopped early (NaN loss or NaN gradients)."""
