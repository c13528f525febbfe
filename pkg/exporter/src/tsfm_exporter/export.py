"""Export pipeline: raw recording -> tokens -> embeddings -> STEB file + manifest.

The STEB writer here is an independent implementation of the wire format (the
format is the only contract shared with the trainer): little-endian header
``magic, version, N, S, T, ell, n_classes, dtype, meta_len``, UTF-8 JSON
metadata carrying the sample ids, then per sample a [S, T, ell] float32 grid
followed by a u32 label.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from tsfm_exporter.embedder import AGGREGATIONS, FrozenEncoder
from tsfm_exporter.errors import DataError, UsageError
from tsfm_exporter.signals import TARGET_FS, TOKEN_LEN, load_raw, tokenize_batch

STEB_MAGIC = b"STEB"
STEB_VERSION = 1
DTYPE_F32_LE = 0
_HEADER = struct.Struct("<4sIIIIIIBI")  # magic, version, N, S, T, ell, n_classes, dtype, meta_len


def write_steb(path, grids: np.ndarray, labels: np.ndarray, n_classes: int, meta: dict) -> None:
    """Write [N, S, T, ell] float32 grids and labels to a STEB file."""
    grids = np.asarray(grids, dtype=np.float32)
    if grids.ndim != 4:
        raise DataError(f"grids must be [N, S, T, ell], got ndim={grids.ndim}")
    if not np.isfinite(grids).all():
        raise DataError("grids contain non-finite values")
    n, s, t, ell = grids.shape
    meta_bytes = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(STEB_MAGIC, STEB_VERSION, n, s, t, ell,
                             n_classes, DTYPE_F32_LE, len(meta_bytes)))
        f.write(meta_bytes)
        for i in range(n):
            f.write(np.ascontiguousarray(grids[i], dtype="<f4").tobytes())
            f.write(struct.pack("<I", int(labels[i])))


def stratified_split(labels: np.ndarray, sample_ids, train_frac: float, val_frac: float, seed: int) -> dict:
    """Per-class shuffled split into train/val/test id lists."""
    if not (0.0 < train_frac < 1.0 and 0.0 < val_frac < 1.0 and train_frac + val_frac < 1.0):
        raise UsageError(
            f"split fractions must leave room for a test set, got train={train_frac} val={val_frac}"
        )
    rng = np.random.default_rng(seed)
    parts = {"train": [], "val": [], "test": []}
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n_train = int(round(train_frac * idx.size))
        n_val = int(round(val_frac * idx.size))
        for i in idx[:n_train]:
            parts["train"].append(sample_ids[i])
        for i in idx[n_train:n_train + n_val]:
            parts["val"].append(sample_ids[i])
        for i in idx[n_train + n_val:]:
            parts["test"].append(sample_ids[i])
    return parts


def write_manifest(parts: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"version": 1, "train": parts["train"], "val": parts["val"],
                   "test": parts["test"]}, f, indent=2)


@dataclass
class ExportSpec:
    input_path: str
    output_path: str
    model: str = "rnn-small"
    aggregation: str = "mean"
    token_len: int = TOKEN_LEN
    target_fs: float = TARGET_FS
    manifest_path: str | None = None
    train_frac: float = 0.6
    val_frac: float = 0.2
    split_seed: int = 0
    extra_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise UsageError(
                f"unknown aggregation mode {self.aggregation!r}, expected one of {AGGREGATIONS}"
            )
        if self.token_len <= 0:
            raise UsageError(f"token length must be positive, got {self.token_len}")
        if self.target_fs <= 0:
            raise UsageError(f"target sampling rate must be positive, got {self.target_fs}")


def export(spec: ExportSpec) -> dict:
    """Run the full pipeline and return a summary of what was written."""
    rec = load_raw(spec.input_path)
    encoder = FrozenEncoder(spec.model)
    tokens = tokenize_batch(rec.signals, rec.fs, spec.token_len, spec.target_fs)
    grids = encoder.embed_grids(tokens, spec.aggregation)
    n, s, t, ell = grids.shape
    meta = {
        "sample_ids": list(rec.sample_ids),
        "model": spec.model,
        "aggregation": spec.aggregation,
        "token_len": spec.token_len,
        "source_fs": rec.fs,
        "target_fs": spec.target_fs,
        **spec.extra_meta,
    }
    write_steb(spec.output_path, grids, rec.labels, rec.n_classes, meta)
    summary = {"n_samples": n, "S": s, "T": t, "ell": ell,
               "n_classes": rec.n_classes, "output": str(spec.output_path)}
    if spec.manifest_path is not None:
        parts = stratified_split(rec.labels, rec.sample_ids,
                                 spec.train_frac, spec.val_frac, spec.split_seed)
        write_manifest(parts, spec.manifest_path)
        summary["manifest"] = str(spec.manifest_path)
        summary["split_sizes"] = {k: len(v) for k, v in parts.items()}
    return summary
