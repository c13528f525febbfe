"""Embedding-grid dataset container, binary format, splits and generators.

The on-disk format ("STEB") is little-endian throughout: a fixed header
(magic, version, counts, dtype code, optional JSON metadata) followed by
sample-interleaved payload, each sample being its S*T*ell float32 grid
immediately followed by a uint32 label. Interleaving keeps single-pass
streaming reads possible on files larger than memory.

The synthetic generators carry the desk-scale evidence: the interaction
dataset hides the class in WHERE a signature vector sits on the grid (so
mean pooling is blind to it), the separable dataset adds a class mean to
every cell (so mean pooling suffices).
"""

import dataclasses
import json
import math
import struct

import numpy as np

from .errors import DataError, FormatError
from .rng import derive_seed

DATASET_MAGIC = b"STEB"
DATASET_VERSION = 1
DTYPE_F32_LE = 0

_HEADER = struct.Struct("<4sIIIIIIBI")   # magic, version, N, S, T, ell, n_classes, dtype, meta_len


@dataclasses.dataclass
class Dataset:
    embeddings: np.ndarray        # [N, S, T, ell] float32
    labels: np.ndarray            # [N] int64
    n_classes: int
    sample_ids: list
    meta: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        n = self.embeddings.shape[0]
        if self.embeddings.ndim != 4:
            raise DataError(f"embeddings must be [N,S,T,ell], got shape {self.embeddings.shape}")
        if self.labels.shape[0] != n:
            raise DataError(f"{n} grids but {self.labels.shape[0]} labels")
        if self.sample_ids is None:
            self.sample_ids = [str(i) for i in range(n)]
        if len(self.sample_ids) != n:
            raise DataError(f"{n} grids but {len(self.sample_ids)} sample ids")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(
                f"labels outside [0, {self.n_classes}): range "
                f"[{int(self.labels.min())}, {int(self.labels.max())}]"
            )

    def __len__(self):
        return self.embeddings.shape[0]

    @property
    def dims(self):
        return self.embeddings.shape[1:]

    def subset(self, ids):
        """New dataset holding exactly ``ids`` in the given order."""
        index = {sid: i for i, sid in enumerate(self.sample_ids)}
        missing = [sid for sid in ids if sid not in index]
        if missing:
            raise DataError(f"unknown sample ids: {missing[:5]}")
        rows = [index[sid] for sid in ids]
        return Dataset(
            self.embeddings[rows], self.labels[rows], self.n_classes,
            [self.sample_ids[r] for r in rows], dict(self.meta),
        )


def zscore_grids(embeddings, eps=1e-8):
    """Per-sample z-score over the whole grid; optional, off by default."""
    x = np.asarray(embeddings, dtype=np.float32)
    axes = tuple(range(1, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    std = x.std(axis=axes, keepdims=True)
    return (x - mean) / (std + np.float32(eps))


def write_dataset(dataset, path):
    """Serialize to the STEB layout; sample ids go in the header metadata."""
    if not np.all(np.isfinite(dataset.embeddings)):
        raise DataError("embeddings contain non-finite values")
    n, s, t, ell = dataset.embeddings.shape
    meta = dict(dataset.meta)
    meta["sample_ids"] = list(dataset.sample_ids)
    meta_bytes = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n, s, t, ell,
                             dataset.n_classes, DTYPE_F32_LE, len(meta_bytes)))
        f.write(meta_bytes)
        for i in range(n):
            f.write(np.ascontiguousarray(dataset.embeddings[i], dtype="<f4").tobytes())
            f.write(struct.pack("<I", int(dataset.labels[i])))


def _read_header(f, path):
    raw = f.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FormatError(
            f"{path}: header truncated at byte {len(raw)} (need {_HEADER.size})"
        )
    magic, version, n, s, t, ell, n_classes, dtype, meta_len = _HEADER.unpack(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0 (not a dataset file)")
    if version != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32_LE:
        raise FormatError(f"{path}: unknown dtype code {dtype}")
    if min(s, t, ell) <= 0 or n_classes <= 0:
        raise FormatError(f"{path}: non-positive dimension in header")
    meta_raw = f.read(meta_len)
    if len(meta_raw) < meta_len:
        raise FormatError(
            f"{path}: metadata truncated at byte {_HEADER.size + len(meta_raw)}"
        )
    try:
        meta = json.loads(meta_raw.decode("utf-8")) if meta_len else {}
    except ValueError as e:
        raise FormatError(f"{path}: bad metadata JSON ({e})") from e
    return n, s, t, ell, n_classes, meta


def iter_dataset(path):
    """Stream (sample_id, grid, label) without loading the whole file."""
    with open(path, "rb") as f:
        n, s, t, ell, n_classes, meta = _read_header(f, path)
        ids = meta.get("sample_ids") or [str(i) for i in range(n)]
        sample_bytes = s * t * ell * 4 + 4
        offset = f.tell()
        for i in range(n):
            raw = f.read(sample_bytes)
            if len(raw) < sample_bytes:
                raise FormatError(
                    f"{path}: sample {i} truncated at byte {offset + len(raw)}: "
                    f"expected {sample_bytes} bytes, found {len(raw)}"
                )
            grid = np.frombuffer(raw[:-4], dtype="<f4").reshape(s, t, ell)
            (label,) = struct.unpack("<I", raw[-4:])
            if label >= n_classes:
                raise FormatError(
                    f"{path}: sample {i} label {label} >= n_classes {n_classes}"
                )
            yield ids[i], grid.astype(np.float32), int(label)
            offset += sample_bytes


def read_dataset(path, zscore=False):
    """Load a whole STEB file into one Dataset."""
    with open(path, "rb") as f:
        n, s, t, ell, n_classes, meta = _read_header(f, path)
        ids = meta.pop("sample_ids", None) or [str(i) for i in range(n)]
        sample_bytes = s * t * ell * 4 + 4
        payload = f.read()
    expected = n * sample_bytes
    if len(payload) != expected:
        verb = "truncated" if len(payload) < expected else "oversized"
        raise FormatError(
            f"{path}: payload {verb}: expected {expected} bytes for "
            f"{n} samples, found {len(payload)}"
        )
    rows = np.frombuffer(payload, dtype=np.uint8).reshape(n, sample_bytes)
    grids = rows[:, :-4].copy().view("<f4").reshape(n, s, t, ell).astype(np.float32)
    labels = rows[:, -4:].copy().view("<u4").reshape(n).astype(np.int64)
    if n and labels.max() >= n_classes:
        bad = int(np.argmax(labels >= n_classes))
        raise FormatError(
            f"{path}: sample {bad} label {int(labels[bad])} >= n_classes {n_classes}"
        )
    if zscore:
        grids = zscore_grids(grids)
    return Dataset(grids, labels, n_classes, list(ids), meta)


@dataclasses.dataclass
class SplitManifest:
    train: list
    val: list
    test: list

    def validate(self, dataset):
        groups = [set(self.train), set(self.val), set(self.test)]
        if sum(len(g) for g in groups) != len(set().union(*groups)):
            raise DataError("split manifest has overlapping ids")
        unknown = set().union(*groups) - set(dataset.sample_ids)
        if unknown:
            raise DataError(f"manifest ids missing from dataset: {sorted(unknown)[:5]}")

    def apply(self, dataset):
        """(train, val, test) datasets in manifest order."""
        self.validate(dataset)
        return (dataset.subset(self.train), dataset.subset(self.val),
                dataset.subset(self.test))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"version": 1, "train": self.train, "val": self.val,
                       "test": self.test}, f, indent=0)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        if d.get("version") != 1:
            raise FormatError(f"{path}: unsupported manifest version {d.get('version')!r}")
        return cls(train=list(d["train"]), val=list(d["val"]), test=list(d["test"]))


def _signatures(ell, n_classes, rng):
    # QR of a Gaussian matrix: exactly orthonormal class directions
    q, _ = np.linalg.qr(rng.normal(size=(ell, n_classes)))
    return q.T.astype(np.float64)


def _home_cells(S, T, n_classes, rng):
    if n_classes <= min(S, T):
        # distinct rows AND columns: the class is only decidable by
        # conjoining both coordinates, not by either alone
        rows = rng.permutation(S)[:n_classes]
        cols = rng.permutation(T)[:n_classes]
        return list(zip(rows.tolist(), cols.tolist()))
    flat = rng.choice(S * T, size=n_classes, replace=False)
    return [(int(c) // T, int(c) % T) for c in flat]


def _stratified_manifest(labels, ids, train_frac, val_frac, rng):
    train, val, test = [], [], []
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        rows = rows[rng.permutation(rows.size)]
        n_tr = int(round(train_frac * rows.size))
        n_va = int(round(val_frac * rows.size))
        train += [ids[r] for r in rows[:n_tr]]
        val += [ids[r] for r in rows[n_tr:n_tr + n_va]]
        test += [ids[r] for r in rows[n_tr + n_va:]]
    return SplitManifest(train=train, val=val, test=test)


def generate_interaction_dataset(S=8, T=4, ell=32, n_classes=4, n_samples=2000,
                                 noise=0.3, amplitude=1.0, seed=0,
                                 distractors=True, train_frac=0.6,
                                 val_frac=0.2):
    """Dataset whose classes differ only in signature placement.

    Class c puts amplitude*v_c at its home cell. With distractors on,
    every other class's signature also appears once, at a random non-home
    cell, so the grid-mean feature vector has the same distribution for
    every class and position-blind pooling carries (almost) no label
    information. A position-aware model can read the home cells directly.
    """
    if n_classes > S * T:
        raise DataError(f"n_classes={n_classes} exceeds grid size {S}*{T}")
    rng = np.random.default_rng(derive_seed(seed, "interaction"))
    sigs = _signatures(ell, n_classes, rng) * amplitude
    homes = _home_cells(S, T, n_classes, rng)
    home_flat = {s * T + t for s, t in homes}
    free_cells = np.array(sorted(set(range(S * T)) - home_flat))

    labels = rng.permutation(np.arange(n_samples) % n_classes)
    grids = rng.normal(0.0, noise, size=(n_samples, S, T, ell))
    for i in range(n_samples):
        c = int(labels[i])
        hs, ht = homes[c]
        grids[i, hs, ht] += sigs[c]
        if distractors:
            for k in range(n_classes):
                if k == c:
                    continue
                cell = int(free_cells[rng.integers(free_cells.size)])
                grids[i, cell // T, cell % T] += sigs[k]
    ids = [str(i) for i in range(n_samples)]
    dataset = Dataset(
        grids.astype(np.float32), labels, n_classes, ids,
        meta={"generator": "interaction", "noise": noise, "amplitude": amplitude,
              "seed": seed, "distractors": bool(distractors),
              "homes": [list(h) for h in homes]},
    )
    manifest = _stratified_manifest(labels, ids, train_frac, val_frac, rng)
    return dataset, manifest


def generate_separable_dataset(S=8, T=4, ell=32, n_classes=4, n_samples=2000,
                               noise=0.3, amplitude=1.0, seed=0,
                               train_frac=0.6, val_frac=0.2):
    """Dataset with a class mean added at every cell; mean pooling suffices."""
    rng = np.random.default_rng(derive_seed(seed, "separable"))
    sigs = _signatures(ell, n_classes, rng) * amplitude
    labels = rng.permutation(np.arange(n_samples) % n_classes)
    grids = rng.normal(0.0, noise, size=(n_samples, S, T, ell))
    grids += sigs[labels][:, None, None, :]
    ids = [str(i) for i in range(n_samples)]
    dataset = Dataset(
        grids.astype(np.float32), labels, n_classes, ids,
        meta={"generator": "separable", "noise": noise, "amplitude": amplitude,
              "seed": seed},
    )
    manifest = _stratified_manifest(labels, ids, train_frac, val_frac, rng)
    return dataset, manifest
