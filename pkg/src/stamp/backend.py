"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set STAMP_PURE_PYTHON=1 to force the numpy fallback. The active backend is
reported in ``BACKEND`` ("ext" or "python"). Public functions normalize
shapes (elementwise kernels get flat views, row kernels 2-D with the
reduced axis last) so both backends see identical layouts.
"""

import os

import numpy as np

from . import kernels_py as _py

_ext = None
if not os.environ.get("STAMP_PURE_PYTHON"):
    try:
        from . import _kernels as _ext  # type: ignore[no-redef]
    except ImportError:
        _ext = None

BACKEND = "ext" if _ext is not None else "python"


def gelu_fwd(x):
    if _ext is None:
        return _py.gelu_fwd(x)
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    _ext.gelu_fwd(x.reshape(-1), out.reshape(-1))
    return out


def gelu_bwd(x, dy):
    if _ext is None:
        return _py.gelu_bwd(x, dy)
    x = np.ascontiguousarray(x)
    dy = np.ascontiguousarray(dy)
    out = np.empty_like(x)
    _ext.gelu_bwd(x.reshape(-1), dy.reshape(-1), out.reshape(-1))
    return out


def softmax_fwd(x):
    """Softmax along the last axis."""
    if _ext is None:
        return _py.softmax_fwd(x)
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    n = x.shape[-1]
    _ext.softmax_fwd(x.reshape(-1, n), out.reshape(-1, n))
    return out


def softmax_bwd(y, dy):
    if _ext is None:
        return _py.softmax_bwd(y, dy)
    y = np.ascontiguousarray(y)
    dy = np.ascontiguousarray(dy)
    out = np.empty_like(y)
    n = y.shape[-1]
    _ext.softmax_bwd(y.reshape(-1, n), dy.reshape(-1, n), out.reshape(-1, n))
    return out


def layernorm_fwd(x, gain, bias, eps):
    """Returns (y, xhat, rstd); rstd has the row shape x.shape[:-1]."""
    if _ext is None:
        return _py.layernorm_fwd(x, gain, bias, eps)
    x = np.ascontiguousarray(x)
    n = x.shape[-1]
    out = np.empty_like(x)
    xhat = np.empty_like(x)
    rstd = np.empty(x.shape[:-1], dtype=x.dtype)
    _ext.layernorm_fwd(x.reshape(-1, n), np.ascontiguousarray(gain),
                       np.ascontiguousarray(bias), float(eps),
                       out.reshape(-1, n), xhat.reshape(-1, n),
                       rstd.reshape(-1))
    return out, xhat, rstd


def layernorm_bwd(xhat, rstd, gain, dy):
    if _ext is None:
        return _py.layernorm_bwd(xhat, rstd, gain, dy)
    xhat = np.ascontiguousarray(xhat)
    dy = np.ascontiguousarray(dy)
    n = xhat.shape[-1]
    dx = np.empty_like(xhat)
    dgain = np.zeros(n, dtype=xhat.dtype)
    dbias = np.zeros(n, dtype=xhat.dtype)
    _ext.layernorm_bwd(xhat.reshape(-1, n), np.ascontiguousarray(rstd).reshape(-1),
                       np.ascontiguousarray(gain), dy.reshape(-1, n),
                       dx.reshape(-1, n), dgain, dbias)
    return dx, dgain, dbias


def adamw_update(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay):
    """In-place AdamW step on a parameter table and its moment buffers."""
    g = np.ascontiguousarray(g)
    if _ext is None:
        _py.adamw_update(p.reshape(-1), g.reshape(-1), m.reshape(-1),
                         v.reshape(-1), t, lr, beta1, beta2, eps,
                         weight_decay)
        return
    _ext.adamw_update(p.reshape(-1), g.reshape(-1), m.reshape(-1),
                      v.reshape(-1), t, lr, beta1, beta2, eps, weight_decay)
