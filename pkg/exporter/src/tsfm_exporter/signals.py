"""Raw-recording container, synthetic generator, resampling, and tokenization.

Recordings travel as a plain .npz with four keys: ``signals`` [trials x
channels x samples], ``labels`` [trials], ``fs`` (scalar sampling rate in Hz),
and ``sample_ids`` (one string per trial). No attempt is made to parse
clinical file formats; converting those to this container is out of scope.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from zipfile import BadZipFile

import numpy as np
from scipy.signal import resample_poly

from tsfm_exporter.errors import DataError, UsageError

# Encoders consume fixed-length tokens at a fixed rate; both are properties of
# the encoder family, not of any one recording.
TOKEN_LEN = 200
TARGET_FS = 200.0


@dataclass
class RawRecording:
    signals: np.ndarray  # [trials, channels, samples] float32
    labels: np.ndarray  # [trials] int64
    fs: float
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.signals.ndim != 3:
            raise DataError(f"signals must be [trials, channels, samples], got ndim={self.signals.ndim}")
        if self.labels.shape != (self.signals.shape[0],):
            raise DataError(
                f"labels shape {self.labels.shape} does not match {self.signals.shape[0]} trials"
            )
        if not np.isfinite(self.signals).all():
            raise DataError("signals contain non-finite values")
        if self.labels.size and self.labels.min() < 0:
            raise DataError("labels must be non-negative")
        if self.fs <= 0:
            raise DataError(f"sampling rate must be positive, got {self.fs}")
        if not self.sample_ids:
            self.sample_ids = [f"trial{i:04d}" for i in range(self.signals.shape[0])]
        if len(self.sample_ids) != self.signals.shape[0]:
            raise DataError("sample_ids length does not match trial count")

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def save_raw(rec: RawRecording, path) -> None:
    np.savez(
        path,
        signals=rec.signals,
        labels=rec.labels,
        fs=np.float64(rec.fs),
        sample_ids=np.array(rec.sample_ids),
    )


def load_raw(path) -> RawRecording:
    try:
        with np.load(path, allow_pickle=False) as z:
            missing = [k for k in ("signals", "labels", "fs") if k not in z.files]
            if missing:
                raise DataError(f"{path}: missing keys {missing}")
            ids = [str(s) for s in z["sample_ids"]] if "sample_ids" in z.files else []
            return RawRecording(
                signals=z["signals"], labels=z["labels"], fs=float(z["fs"]), sample_ids=ids
            )
    except (OSError, ValueError, BadZipFile) as e:
        # np.load raises BadZipFile for corrupt archives
        raise DataError(f"{path}: not a readable recording archive ({e})") from e


def generate_raw(
    n_trials: int = 24,
    channels: int = 2,
    seconds: float = 4.0,
    fs: float = 200.0,
    n_classes: int = 2,
    noise: float = 0.5,
    seed: int = 0,
) -> RawRecording:
    """Sinusoidal trials whose base frequency and channel phase encode the label.

    Good enough for pipeline smoke tests: a linear probe on the exported
    embeddings beats chance comfortably, and every parameter is explicit so
    token-count arithmetic in tests stays readable.
    """
    if n_trials < n_classes:
        raise UsageError(f"need at least one trial per class, got {n_trials} < {n_classes}")
    rng = np.random.default_rng(seed)
    n = int(round(seconds * fs))
    t = np.arange(n, dtype=np.float64) / fs
    labels = np.arange(n_trials, dtype=np.int64) % n_classes
    rng.shuffle(labels)
    signals = np.empty((n_trials, channels, n), dtype=np.float32)
    for i, y in enumerate(labels):
        freq = 5.0 + 3.0 * float(y)  # class signature lives in the base frequency
        for c in range(channels):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            wave = np.sin(2.0 * np.pi * freq * t + phase + 0.5 * c)
            signals[i, c] = wave + noise * rng.standard_normal(n)
    return RawRecording(signals=signals, labels=labels, fs=float(fs))


def resample_to(signals: np.ndarray, fs: float, target_fs: float = TARGET_FS) -> np.ndarray:
    """Polyphase-resample the last axis from fs to target_fs."""
    if fs == target_fs:
        return signals
    ratio = Fraction(target_fs).limit_denominator(1000) / Fraction(fs).limit_denominator(1000)
    return resample_poly(signals, ratio.numerator, ratio.denominator, axis=-1)


def instance_norm(tokens: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Z-score each token independently; constant tokens collapse to zeros."""
    mean = tokens.mean(axis=-1, keepdims=True)
    std = tokens.std(axis=-1, keepdims=True)
    return ((tokens - mean) / (std + eps)).astype(np.float32)


def _window(signals: np.ndarray, token_len: int) -> np.ndarray:
    """Cut the last axis into contiguous non-overlapping windows, dropping the tail."""
    if token_len <= 0:
        raise UsageError(f"token length must be positive, got {token_len}")
    n = signals.shape[-1]
    n_tokens, remainder = divmod(n, token_len)
    if n_tokens == 0:
        raise DataError(f"signal has {n} samples, shorter than one {token_len}-sample token")
    if remainder:
        warnings.warn(
            f"dropping {remainder} trailing samples that do not fill a {token_len}-sample token"
        )
        signals = signals[..., : n_tokens * token_len]
    return signals.reshape(*signals.shape[:-1], n_tokens, token_len)


def tokenize(signal: np.ndarray, fs: float, token_len: int = TOKEN_LEN, target_fs: float = TARGET_FS) -> np.ndarray:
    """[channels, samples] at fs -> [channels, tokens, token_len] z-scored tokens."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 2:
        raise DataError(f"expected [channels, samples], got ndim={signal.ndim}")
    return instance_norm(_window(resample_to(signal, fs, target_fs), token_len))


def tokenize_batch(signals: np.ndarray, fs: float, token_len: int = TOKEN_LEN, target_fs: float = TARGET_FS) -> np.ndarray:
    """[trials, channels, samples] -> [trials, channels, tokens, token_len], one tail warning."""
    signals = np.asarray(signals, dtype=np.float64)
    if signals.ndim != 3:
        raise DataError(f"expected [trials, channels, samples], got ndim={signals.ndim}")
    return instance_norm(_window(resample_to(signals, fs, target_fs), token_len))
