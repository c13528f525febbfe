"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a float32 (or float64, for gradient-check builds) numpy
buffer. Executing ops inside a ``with Tape():`` block appends records to
the tape in execution order; ``Tape.backward`` replays them in reverse,
which visits every node after all of its consumers. Gradients accumulate
additively (+=) into ``Tensor.grad``; callers zero grads explicitly before
each optimizer update.

Outside a tape block ops compute values only, so inference pays no
bookkeeping cost and shared tensors stay immutable.
"""

import numpy as np

from . import backend as K
from .errors import ShapeError, UsageError

_FLOAT_DTYPES = (np.float32, np.float64)

_active_tape = None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype not in _FLOAT_DTYPES:
                arr = arr.astype(np.float32)
        else:
            arr = np.asarray(data, dtype=dtype)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


class Tape:
    """Ordered record of executed ops with their backward closures."""

    def __init__(self):
        self.records = []

    def __enter__(self):
        global _active_tape
        if _active_tape is not None:
            raise UsageError("tapes do not nest")
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = None
        return False

    def backward(self, loss):
        """Populate ``grad`` on every recorded node reachable from ``loss``."""
        if loss.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if not self.records:
            raise UsageError("backward on an empty tape")
        _accum(loss, np.ones_like(loss.data))
        for node, fn in reversed(self.records):
            if node.grad is not None:
                fn()


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _make(data, parents, grad_fn):
    """Create an op result; records ``grad_fn`` when a tape is active."""
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if _active_tape is not None and out.requires_grad:
        _active_tape.records.append((out, grad_fn(out)))
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcasted gradient back to the parent shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _swap(a):
    return np.swapaxes(a, -1, -2)


def add(a, b):
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    data = a.data + b.data

    def grad_fn(out):
        def bwd():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad, b.data.shape))
        return bwd

    return _make(data, (a, b), grad_fn)


def mul(a, b):
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    data = a.data * b.data

    def grad_fn(out):
        def bwd():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))
        return bwd

    return _make(data, (a, b), grad_fn)


def matmul(a, b):
    """Batched matrix product a[..., m, k] @ b[..., k, n]."""
    if a.ndim < 2 or b.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions disagree for shapes "
            f"{tuple(a.data.shape)} and {tuple(b.data.shape)}"
        )
    data = np.matmul(a.data, b.data)

    def grad_fn(out):
        def bwd():
            if a.requires_grad:
                _accum(a, _unbroadcast(np.matmul(out.grad, _swap(b.data)), a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(np.matmul(_swap(a.data), out.grad), b.data.shape))
        return bwd

    return _make(data, (a, b), grad_fn)


def gelu(x):
    """Exact GELU x * Phi(x) via the Gaussian CDF (erf form)."""
    data = K.gelu_fwd(x.data)

    def grad_fn(out):
        def bwd():
            _accum(x, K.gelu_bwd(x.data, out.grad))
        return bwd

    return _make(data, (x,), grad_fn)


def softmax(x, axis=-1):
    """Max-subtracted stable softmax along ``axis``."""
    ax = axis if axis >= 0 else x.ndim + axis
    if not 0 <= ax < x.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {tuple(x.shape)}")
    last = ax == x.ndim - 1
    xd = x.data if last else np.moveaxis(x.data, ax, -1)
    yd = K.softmax_fwd(xd)
    data = yd if last else np.moveaxis(yd, -1, ax)

    def grad_fn(out):
        def bwd():
            g = out.grad if last else np.moveaxis(out.grad, ax, -1)
            gx = K.softmax_bwd(yd, g)
            _accum(x, gx if last else np.moveaxis(gx, -1, ax))
        return bwd

    return _make(data, (x,), grad_fn)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last (feature) axis, then scale and shift."""
    data, xhat, rstd = K.layernorm_fwd(x.data, gain.data, bias.data, eps)

    def grad_fn(out):
        def bwd():
            dx, dgain, dbias = K.layernorm_bwd(xhat, rstd, gain.data, out.grad)
            if x.requires_grad:
                _accum(x, dx)
            if gain.requires_grad:
                _accum(gain, dgain)
            if bias.requires_grad:
                _accum(bias, dbias)
        return bwd

    return _make(data, (x, gain, bias), grad_fn)


def dropout(x, rate, training, rng=None):
    """Inverted dropout: scales kept units by 1/(1-rate) during training."""
    if not 0.0 <= rate < 1.0:
        from .errors import ConfigError
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise UsageError("training-mode dropout needs a DropoutRng")
    mask = rng.mask(x.data.shape, rate, dtype=x.data.dtype)
    data = x.data * mask

    def grad_fn(out):
        def bwd():
            _accum(x, out.grad * mask)
        return bwd

    return _make(data, (x,), grad_fn)


def concat(tensors, axis):
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def grad_fn(out):
        def bwd():
            offsets = np.cumsum([0] + sizes)
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[axis] = slice(lo, hi)
                    _accum(t, out.grad[tuple(idx)])
        return bwd

    return _make(data, tuple(tensors), grad_fn)


def split(x, sections, axis):
    """Split into ``sections`` equal parts along ``axis``."""
    if x.data.shape[axis] % sections != 0:
        raise ShapeError(
            f"split: axis {axis} of shape {tuple(x.shape)} not divisible into "
            f"{sections} parts"
        )
    pieces = np.split(x.data, sections, axis=axis)
    step = x.data.shape[axis] // sections
    outs = []
    for i, piece in enumerate(pieces):
        def grad_fn(out, lo=i * step):
            def bwd():
                idx = [slice(None)] * x.data.ndim
                idx[axis] = slice(lo, lo + step)
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[tuple(idx)] += out.grad
            return bwd
        outs.append(_make(piece, (x,), grad_fn))
    return outs


def tsum(x, axis=None, keepdims=False):
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(out):
        def bwd():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.data.shape))
        return bwd

    return _make(data, (x,), grad_fn)


def tmean(x, axis=None, keepdims=False):
    data = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def grad_fn(out):
        def bwd():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.data.shape) / x.data.dtype.type(count))
        return bwd

    return _make(data, (x,), grad_fn)


def permute(x, axes):
    data = np.transpose(x.data, axes)
    inverse = np.argsort(axes)

    def grad_fn(out):
        def bwd():
            _accum(x, np.transpose(out.grad, inverse))
        return bwd

    return _make(data, (x,), grad_fn)


def reshape(x, shape):
    data = x.data.reshape(shape)

    def grad_fn(out):
        def bwd():
            _accum(x, out.grad.reshape(x.data.shape))
        return bwd

    return _make(data, (x,), grad_fn)
