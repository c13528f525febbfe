"""Spatial-temporal adapter for frozen EEG foundation-model embeddings.

The package turns per-channel, per-patch embedding grids into class
predictions: a linear reduction, learned positional encodings, a stack of
gated-MLP mixer blocks and an attention or mean pooling head, trained with
a small NumPy autodiff core instead of a deep-learning framework.
"""

from .backend import BACKEND
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    ShapeError,
    StampError,
    TrainingAbort,
    UsageError,
)
from .model import StampConfig, StampModel
from .tensor import Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DataError",
    "FormatError",
    "ShapeError",
    "StampConfig",
    "StampError",
    "StampModel",
    "Tape",
    "Tensor",
    "TrainingAbort",
    "UsageError",
    "__version__",
]
