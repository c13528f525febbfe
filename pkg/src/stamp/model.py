"""The adapter model: reduction, positional encoding, gated mixing, pooling.

An input grid E[S, T, ell] of frozen foundation-model embeddings is mapped
to class probabilities through a bias-free linear reduction, additive
positional tables, a stack of gated-MLP blocks that mix along the temporal
and spatial axes, and either mean pooling or multi-head attention pooling
feeding a linear head.

Every parameter table is declared once in ``table_specs``; initialization,
parameter counting and the checkpoint layout all derive from that list, so
they cannot drift apart.
"""

import dataclasses
import json
import math
import struct

import numpy as np

from . import tensor as tt
from .errors import ConfigError, FormatError, ShapeError
from .rng import derive_seed
from .tensor import Tensor

PE_MODES = ("none", "N", "ST", "NST")
MIXERS = ("none", "b_gmlp", "cc_gmlp")
AGGREGATORS = ("mean", "mhap")

CHECKPOINT_MAGIC = b"STMP"
CHECKPOINT_VERSION = 1


@dataclasses.dataclass(frozen=True)
class StampConfig:
    """Architecture hyperparameters; validated on construction."""

    S: int
    T: int
    ell: int
    n_classes: int
    D: int = 128
    L: int = 8
    h: int = 256
    A: int = 4
    Q: int = 8
    pe_mode: str = "NST"
    mixer: str = "cc_gmlp"
    aggregator: str = "mhap"
    lambda_mix: float = 0.5
    dropout: float = 0.3

    def __post_init__(self):
        for field in ("S", "T", "ell", "n_classes", "D", "L", "h", "A", "Q"):
            v = getattr(self, field)
            if not isinstance(v, int) or isinstance(v, bool) or v < (0 if field == "L" else 1):
                raise ConfigError(f"{field} must be a positive integer, got {v!r}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be at least 2, got {self.n_classes}")
        if self.D % self.A != 0:
            raise ConfigError(f"D must be divisible by A, got D={self.D}, A={self.A}")
        if self.h % 2 != 0:
            raise ConfigError(f"h must be even (gating splits it in half), got h={self.h}")
        if self.pe_mode not in PE_MODES:
            raise ConfigError(f"pe_mode must be one of {PE_MODES}, got {self.pe_mode!r}")
        if self.mixer not in MIXERS:
            raise ConfigError(f"mixer must be one of {MIXERS}, got {self.mixer!r}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(
                f"aggregator must be one of {AGGREGATORS}, got {self.aggregator!r}"
            )
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise ConfigError(f"lambda_mix must be in [0, 1], got {self.lambda_mix}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def d_head(self):
        return self.D // self.A

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclasses.dataclass(frozen=True)
class TableSpec:
    name: str
    shape: tuple
    init: str   # "uniform" | "normal" | "zeros" | "ones"
    arg: float = 0.0


def table_specs(config):
    """Canonical ordered list of parameter tables for a configuration."""
    c = config
    specs = [TableSpec("w_reduce", (c.ell, c.D), "uniform", math.sqrt(1.0 / c.ell))]
    if c.pe_mode in ("N", "NST"):
        specs.append(TableSpec("pe_token", (c.S, c.T, c.D), "normal", 0.02))
    if c.pe_mode in ("ST", "NST"):
        specs.append(TableSpec("pe_spatial", (c.S, c.D), "normal", 0.02))
        specs.append(TableSpec("pe_temporal", (c.T, c.D), "normal", 0.02))
    if c.mixer != "none":
        for i in range(c.L):
            p = f"block{i}."
            specs.append(TableSpec(p + "ln_gain", (c.D,), "ones"))
            specs.append(TableSpec(p + "ln_bias", (c.D,), "zeros"))
            specs.append(TableSpec(p + "u_w", (c.D, c.h), "uniform", math.sqrt(1.0 / c.D)))
            specs.append(TableSpec(p + "u_b", (c.h,), "zeros"))
            if c.mixer == "cc_gmlp":
                # near-zero gate weights with unit bias: gate ~ identity at init
                specs.append(TableSpec(p + "gate_t_w", (c.T, c.T), "normal", 1e-6))
                specs.append(TableSpec(p + "gate_t_b", (c.T,), "ones"))
                specs.append(TableSpec(p + "gate_s_w", (c.S, c.S), "normal", 1e-6))
                specs.append(TableSpec(p + "gate_s_b", (c.S,), "ones"))
                specs.append(
                    TableSpec(p + "v_w", (c.h, c.D), "uniform", math.sqrt(1.0 / c.h))
                )
            else:
                m = c.S * c.T
                specs.append(TableSpec(p + "gate_w", (m, m), "normal", 1e-6))
                specs.append(TableSpec(p + "gate_b", (m,), "ones"))
                specs.append(
                    TableSpec(
                        p + "v_w", (c.h // 2, c.D), "uniform", math.sqrt(2.0 / c.h)
                    )
                )
            specs.append(TableSpec(p + "v_b", (c.D,), "zeros"))
    if c.aggregator == "mhap":
        d = c.d_head
        for a in range(c.A):
            p = f"head{a}."
            specs.append(TableSpec(p + "w", (c.D, d), "uniform", math.sqrt(1.0 / c.D)))
            specs.append(TableSpec(p + "b", (d,), "zeros"))
            specs.append(TableSpec(p + "queries", (c.Q, d), "uniform", math.sqrt(1.0 / d)))
    specs.append(TableSpec("out_w", (c.D, c.n_classes), "uniform", math.sqrt(1.0 / c.D)))
    specs.append(TableSpec("out_b", (c.n_classes,), "zeros"))
    return specs


def param_count(config):
    """Exact number of trainable scalars for a configuration."""
    return sum(int(np.prod(s.shape)) for s in table_specs(config))


def init_params(config, seed=0, dtype=np.float32):
    """Draw all parameter tables in canonical order from one seeded stream."""
    rng = np.random.default_rng(derive_seed(seed, "init"))
    params = {}
    for spec in table_specs(config):
        if spec.init == "uniform":
            arr = rng.uniform(-spec.arg, spec.arg, size=spec.shape)
        elif spec.init == "normal":
            arr = rng.normal(0.0, spec.arg, size=spec.shape)
        elif spec.init == "zeros":
            arr = np.zeros(spec.shape)
        else:
            arr = np.ones(spec.shape)
        params[spec.name] = Tensor(arr.astype(dtype), requires_grad=True)
    return params


def _mix_along(x, w, b, axis):
    """Apply the square map w (+ bias b) along one axis of x."""
    nd = x.ndim
    ax = axis % nd
    order = tuple(i for i in range(nd) if i != ax) + (ax,)
    moved = tt.permute(x, order)
    mixed = tt.matmul(moved, tt.permute(w, (1, 0)))
    back = tt.permute(mixed, tuple(np.argsort(order)))
    bshape = [1] * nd
    bshape[ax] = b.shape[0]
    return tt.add(back, tt.reshape(b, tuple(bshape)))


def spatial_gate(z, w, b):
    """Split z in half along features; gate half one by the S-mixed half two."""
    z1, z2 = tt.split(z, 2, axis=-1)
    return tt.mul(z1, _mix_along(z2, w, b, axis=-3))


def temporal_gate(z, w, b):
    """As spatial_gate, mixing along the temporal axis instead."""
    z1, z2 = tt.split(z, 2, axis=-1)
    return tt.mul(z1, _mix_along(z2, w, b, axis=-2))


def token_gate(z, w, b):
    """Single gating unit over an already-flattened token axis."""
    z1, z2 = tt.split(z, 2, axis=-1)
    return tt.mul(z1, _mix_along(z2, w, b, axis=-2))


def cc_gmlp_block(x, blk, rate=0.0, training=False, rng=None):
    """Pre-norm gated block mixing temporal and spatial axes in parallel."""
    xn = tt.layer_norm(x, blk["ln_gain"], blk["ln_bias"])
    z = tt.gelu(tt.add(tt.matmul(xn, blk["u_w"]), blk["u_b"]))
    zt = temporal_gate(z, blk["gate_t_w"], blk["gate_t_b"])
    zs = spatial_gate(z, blk["gate_s_w"], blk["gate_s_b"])
    zc = tt.concat([zt, zs], axis=-1)   # temporal pathway first
    e_hat = tt.add(tt.matmul(zc, blk["v_w"]), blk["v_b"])
    e_hat = tt.dropout(e_hat, rate, training, rng)
    return tt.add(e_hat, x)


def b_gmlp_block(x, blk, rate=0.0, training=False, rng=None):
    """Plain gated block: one gating unit over flattened S*T tokens."""
    lead = x.data.shape[:-3]
    s, t, _ = x.data.shape[-3:]
    xn = tt.layer_norm(x, blk["ln_gain"], blk["ln_bias"])
    z = tt.gelu(tt.add(tt.matmul(xn, blk["u_w"]), blk["u_b"]))
    z = tt.reshape(z, lead + (s * t, z.data.shape[-1]))
    zg = token_gate(z, blk["gate_w"], blk["gate_b"])
    e_hat = tt.add(tt.matmul(zg, blk["v_w"]), blk["v_b"])
    e_hat = tt.reshape(e_hat, lead + (s, t, e_hat.data.shape[-1]))
    e_hat = tt.dropout(e_hat, rate, training, rng)
    return tt.add(e_hat, x)


def _swap_last(x):
    order = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    return tt.permute(x, order)


def mhap(e_hat, heads):
    """Multi-head attention pooling of a token grid down to one vector.

    ``heads`` is a list of (w, b, queries) parameter triples. Per head:
    project tokens, attend each query over all tokens, pool, then combine
    the per-query summaries with softmax-normalized attention masses.
    """
    lead = e_hat.data.shape[:-3]
    s, t, dim = e_hat.data.shape[-3:]
    tokens = tt.reshape(e_hat, lead + (s * t, dim))
    pooled = []
    for w, b, queries in heads:
        d = w.shape[1]
        h = tt.add(tt.matmul(tokens, w), b)                      # [..., M, d]
        scores = tt.mul(tt.matmul(h, tt.permute(queries, (1, 0))), 1.0 / math.sqrt(d))
        alpha = tt.softmax(scores, axis=-2)                      # over tokens
        u = tt.matmul(_swap_last(alpha), h)                      # [..., Q, d]
        beta = tt.tsum(alpha, axis=-2)                           # [..., Q]
        beta = tt.softmax(beta, axis=-1)
        z = tt.matmul(tt.reshape(beta, beta.data.shape[:-1] + (1, beta.data.shape[-1])), u)
        pooled.append(tt.reshape(z, lead + (d,)))
    return tt.concat(pooled, axis=-1)


def head_logits(z, e_hat, lam, w_out, b_out):
    """Blend the pooled summary with the token mean, then map to logits."""
    lead = e_hat.data.shape[:-3]
    s, t, dim = e_hat.data.shape[-3:]
    tokens = tt.reshape(e_hat, lead + (s * t, dim))
    e_bar = tt.tmean(tokens, axis=-2)
    if z is None:
        mix = e_bar
    else:
        mix = tt.add(tt.mul(z, lam), tt.mul(e_bar, 1.0 - lam))
    # lift to a row vector so the map works batched and unbatched alike
    row = tt.reshape(mix, lead + (1, dim))
    logits = tt.add(tt.matmul(row, w_out), b_out)
    return tt.reshape(logits, lead + (w_out.shape[1],))


def head(z, e_hat, lam, w_out, b_out):
    """As head_logits, with the final softmax applied."""
    return tt.softmax(head_logits(z, e_hat, lam, w_out, b_out), axis=-1)


class StampModel:
    """Configuration plus parameter tables, with forward passes."""

    def __init__(self, config, params=None, seed=0, dtype=np.float32):
        self.config = config
        self.params = init_params(config, seed, dtype) if params is None else params
        for spec in table_specs(config):
            p = self.params.get(spec.name)
            if p is None or tuple(p.shape) != spec.shape:
                have = None if p is None else tuple(p.shape)
                raise ConfigError(
                    f"parameter table {spec.name!r}: expected shape {spec.shape}, got {have}"
                )

    def parameters(self):
        return self.params

    def param_count(self):
        return param_count(self.config)

    def _block(self, i):
        prefix = f"block{i}."
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}

    def _as_tensor(self, x):
        if isinstance(x, Tensor):
            return x
        return Tensor(np.asarray(x, dtype=self.params["w_reduce"].dtype))

    def reduce(self, e):
        """Project the embedding axis from ell down to D (bias-free)."""
        e = self._as_tensor(e)
        c = self.config
        if e.ndim < 3 or e.data.shape[-3:] != (c.S, c.T, c.ell):
            raise ShapeError(
                f"embedding grid shape {tuple(e.data.shape)} does not match "
                f"config (S={c.S}, T={c.T}, ell={c.ell})"
            )
        return tt.matmul(e, self.params["w_reduce"])

    def add_positional(self, e):
        """Add the positional tables selected by pe_mode."""
        mode = self.config.pe_mode
        if mode in ("N", "NST"):
            e = tt.add(e, self.params["pe_token"])
        if mode in ("ST", "NST"):
            c = self.config
            e = tt.add(e, tt.reshape(self.params["pe_spatial"], (c.S, 1, c.D)))
            e = tt.add(e, self.params["pe_temporal"])
        return e

    def _heads(self):
        return [
            (
                self.params[f"head{a}.w"],
                self.params[f"head{a}.b"],
                self.params[f"head{a}.queries"],
            )
            for a in range(self.config.A)
        ]

    def forward_logits(self, e, training=False, rng=None):
        """Pre-softmax logits for one grid [S,T,ell] or a batch [B,S,T,ell]."""
        c = self.config
        x = self.reduce(e)
        x = self.add_positional(x)
        if c.mixer != "none":
            block_fn = cc_gmlp_block if c.mixer == "cc_gmlp" else b_gmlp_block
            for i in range(c.L):
                x = block_fn(x, self._block(i), c.dropout, training, rng)
        z = None
        if c.aggregator == "mhap":
            z = mhap(x, self._heads())
            z = tt.dropout(z, c.dropout, training, rng)
        lam = c.lambda_mix if c.aggregator == "mhap" else 0.0
        return head_logits(z, x, lam, self.params["out_w"], self.params["out_b"])

    def forward(self, e, training=False, rng=None):
        """Class probabilities; softmax over forward_logits."""
        return tt.softmax(self.forward_logits(e, training, rng), axis=-1)

    def save(self, path):
        """Write config and all tables (canonical order, f32 LE) to ``path``."""
        cfg = json.dumps(self.config.to_dict()).encode("utf-8")
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg)))
            f.write(cfg)
            for spec in table_specs(self.config):
                name = spec.name.encode("utf-8")
                data = np.ascontiguousarray(
                    self.params[spec.name].data, dtype="<f4"
                )
                f.write(struct.pack("<H", len(name)))
                f.write(name)
                f.write(struct.pack("<B", data.ndim))
                f.write(struct.pack(f"<{data.ndim}I", *data.shape))
                f.write(data.tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            raw = f.read()
        off = 0

        def take(n, what):
            nonlocal off
            if off + n > len(raw):
                raise FormatError(
                    f"checkpoint truncated at byte {off}: needed {n} more bytes "
                    f"for {what}, file has {len(raw) - off}"
                )
            chunk = raw[off:off + n]
            off += n
            return chunk

        if take(4, "magic") != CHECKPOINT_MAGIC:
            raise FormatError("not a model checkpoint: bad magic at byte 0")
        version, cfg_len = struct.unpack("<II", take(8, "header"))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        config = StampConfig.from_dict(json.loads(take(cfg_len, "config").decode("utf-8")))
        params = {}
        for spec in table_specs(config):
            (name_len,) = struct.unpack("<H", take(2, "table name length"))
            name = take(name_len, "table name").decode("utf-8")
            if name != spec.name:
                raise FormatError(
                    f"table order mismatch at byte {off}: expected {spec.name!r}, "
                    f"found {name!r}"
                )
            (ndim,) = struct.unpack("<B", take(1, "table rank"))
            shape = struct.unpack(f"<{ndim}I", take(4 * ndim, "table dims"))
            if shape != spec.shape:
                raise FormatError(
                    f"table {name!r}: expected shape {spec.shape}, found {shape}"
                )
            count = int(np.prod(shape))
            data = np.frombuffer(take(4 * count, f"table {name!r} data"), dtype="<f4")
            params[name] = Tensor(
                data.reshape(shape).astype(np.float32), requires_grad=True
            )
        if off != len(raw):
            raise FormatError(f"{len(raw) - off} trailing bytes after last table")
        return cls(config, params=params)
