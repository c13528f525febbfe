"""Deterministic random state helpers.

Dropout masks come from a counter-based Philox stream keyed on
(seed, epoch, batch, op-index), so a mask depends only on its logical
position in the run, never on thread count or call interleaving.
"""

import zlib

import numpy as np

from .errors import ConfigError


def _word(w):
    if isinstance(w, str):
        return zlib.crc32(w.encode("utf-8"))
    return int(w) & 0xFFFFFFFF


def derive_seed(master, *words) -> int:
    """Stable 63-bit seed from a master seed and integer or string words."""
    ss = np.random.SeedSequence([_word(master), *[_word(w) for w in words]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


class DropoutRng:
    """Counter-based mask source for inverted dropout.

    ``begin_step`` positions the stream at (epoch, batch); every
    ``mask`` call consumes one op-index slot. Two calls at the same
    (seed, epoch, batch, op-index) produce identical masks.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.epoch = 0
        self.batch = 0
        self._op_index = 0

    def begin_step(self, epoch: int, batch: int) -> "DropoutRng":
        self.epoch = int(epoch)
        self.batch = int(batch)
        self._op_index = 0
        return self

    def mask(self, shape, rate: float, dtype=np.float32) -> np.ndarray:
        """Scaled keep-mask: entries are 0 or 1/(1-rate)."""
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        bitgen = np.random.Philox(
            key=self.seed, counter=[self._op_index, self.batch, self.epoch, 0]
        )
        self._op_index += 1
        if rate == 0.0:
            return np.ones(shape, dtype=dtype)
        keep = np.random.Generator(bitgen).random(shape) >= rate
        scale = np.dtype(dtype).type(1.0 / (1.0 - rate))
        return keep.astype(dtype) * scale
