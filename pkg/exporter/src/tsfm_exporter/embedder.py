"""Frozen sequence encoders and per-token aggregation.

Shipping real pretrained weights is not possible here, so the registry holds
deterministic stand-ins: tanh recurrences whose parameters are drawn once from
a seed derived from the model id. They honor everything downstream code relies
on: a fixed embedding width per model id, bit-reproducible outputs, identical
tokens mapping to identical embeddings, and a genuine difference between
terminal-state and mean-state aggregation. Swapping in a real encoder means
replacing ``FrozenEncoder`` while keeping ``encode_steps``'s contract.
"""

from __future__ import annotations

import zlib

import numpy as np

from tsfm_exporter.errors import ModelError, UsageError

MODEL_WIDTHS = {"rnn-small": 32, "rnn-base": 128, "rnn-large": 1024}

AGGREGATIONS = ("mean", "eos")


def aggregate_states(states: np.ndarray, eos_state: np.ndarray, mode: str) -> np.ndarray:
    """[tokens, steps, width] per-step states -> [tokens, width] embeddings.

    mode "mean" averages the per-step states (so a constant state sequence
    aggregates to that state); mode "eos" returns the state after the encoder
    consumed its end-of-sequence marker. Both produce the same shape.
    """
    if mode == "mean":
        return states.mean(axis=-2)
    if mode == "eos":
        return eos_state
    raise UsageError(f"unknown aggregation mode {mode!r}, expected one of {AGGREGATIONS}")


class FrozenEncoder:
    """Deterministic tanh recurrence standing in for a pretrained encoder."""

    def __init__(self, model_id: str):
        width = MODEL_WIDTHS.get(model_id)
        if width is None:
            raise ModelError(f"unknown model id {model_id!r}, expected one of {sorted(MODEL_WIDTHS)}")
        self.model_id = model_id
        self.width = width
        rng = np.random.default_rng(zlib.crc32(model_id.encode()))
        # 0.4/sqrt(width) keeps the recurrence spectral radius below one, so
        # long tokens neither saturate nor die out.
        self.w_h = rng.normal(0.0, 0.4 / np.sqrt(width), size=(width, width))
        self.w_x = rng.normal(0.0, 1.0, size=width)
        self.b = rng.normal(0.0, 0.1, size=width)
        self.eos_in = rng.normal(0.0, 1.0, size=width)

    def encode_steps(self, tokens: np.ndarray):
        """[tokens, steps] scalars -> ([tokens, steps, width] states, [tokens, width] eos state)."""
        tokens = np.asarray(tokens, dtype=np.float64)
        if tokens.ndim != 2:
            raise ModelError(f"model {self.model_id!r}: expected [tokens, steps], got ndim={tokens.ndim}")
        if not np.isfinite(tokens).all():
            raise ModelError(f"model {self.model_id!r}: non-finite values in input tokens")
        m, k = tokens.shape
        h = np.zeros((m, self.width))
        states = np.empty((m, k, self.width))
        for t in range(k):
            h = np.tanh(h @ self.w_h + tokens[:, t, None] * self.w_x + self.b)
            states[:, t] = h
        eos_state = np.tanh(h @ self.w_h + self.eos_in + self.b)
        return states, eos_state

    def embed(self, tokens: np.ndarray, aggregation: str = "mean") -> np.ndarray:
        """[tokens, steps] -> [tokens, width] float32 embeddings."""
        states, eos_state = self.encode_steps(tokens)
        return aggregate_states(states, eos_state, aggregation).astype(np.float32)

    def embed_grids(self, tokens: np.ndarray, aggregation: str = "mean") -> np.ndarray:
        """[trials, channels, tokens, steps] -> [trials, channels, tokens, width]."""
        n, s, t, k = tokens.shape
        flat = self.embed(tokens.reshape(n * s * t, k), aggregation)
        return flat.reshape(n, s, t, self.width)
