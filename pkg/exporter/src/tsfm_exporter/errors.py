"""Error taxonomy for the exporter.

Kept deliberately independent of the trainer package: the two only share the
STEB wire format, never Python types.
"""


class ExporterError(Exception):
    """Base class for everything raised on purpose by this package."""


class UsageError(ExporterError):
    """Caller passed inconsistent options (bad aggregation mode, bad fractions)."""


class DataError(ExporterError):
    """Input arrays are malformed: missing keys, wrong shapes, too short, non-finite."""


class ModelError(ExporterError):
    """Encoder lookup or inference failed; message always names the model id."""
