"""Turn raw multichannel recordings into grids of frozen-encoder embeddings.

The pipeline is: resample to the encoder's native rate, cut each channel into
fixed-length tokens, z-score each token, run a frozen sequence encoder over
every token, aggregate the per-step states into one vector per token, and
write the resulting [channels x tokens x width] grids to a STEB dataset that
the downstream trainer consumes unchanged.
"""

from tsfm_exporter.embedder import MODEL_WIDTHS, FrozenEncoder, aggregate_states
from tsfm_exporter.errors import DataError, ExporterError, ModelError, UsageError
from tsfm_exporter.export import ExportSpec, export, write_steb
from tsfm_exporter.signals import (
    RawRecording,
    generate_raw,
    instance_norm,
    load_raw,
    resample_to,
    save_raw,
    tokenize,
    tokenize_batch,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "ExporterError",
    "ExportSpec",
    "FrozenEncoder",
    "MODEL_WIDTHS",
    "ModelError",
    "RawRecording",
    "UsageError",
    "aggregate_states",
    "export",
    "generate_raw",
    "instance_norm",
    "load_raw",
    "resample_to",
    "save_raw",
    "tokenize",
    "tokenize_batch",
    "write_steb",
]
