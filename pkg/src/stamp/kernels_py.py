"""Numpy reference implementations of the hot kernels.

Same contracts as the compiled versions in ``_kernels.pyx``; the backend
module picks one of the two at import time. Shapes are normalized by the
caller: elementwise kernels take any shape, row kernels take 2-D arrays
with the reduced axis last.
"""

import numpy as np
from scipy.special import erf

INV_SQRT2 = 0.7071067811865476
INV_SQRT_2PI = 0.3989422804014327


def gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * INV_SQRT2))


def gelu_bwd(x, dy):
    # d/dx [x * Phi(x)] = Phi(x) + x * phi(x)
    cdf = 0.5 * (1.0 + erf(x * INV_SQRT2))
    pdf = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def softmax_fwd(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_bwd(y, dy):
    inner = (y * dy).sum(axis=-1, keepdims=True)
    return y * (dy - inner)


def layernorm_fwd(x, gain, bias, eps):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * rstd
    return xhat * gain + bias, xhat, rstd.reshape(rstd.shape[:-1])


def layernorm_bwd(xhat, rstd, gain, dy):
    n = xhat.shape[-1]
    dxhat = dy * gain
    term1 = dxhat.mean(axis=-1, keepdims=True)
    term2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = rstd[..., None] * (dxhat - term1 - xhat * term2)
    dgain = (dy * xhat).reshape(-1, n).sum(axis=0)
    dbias = dy.reshape(-1, n).sum(axis=0)
    return dx, dgain, dbias


def adamw_update(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay):
    """In-place decoupled-decay Adam step on flat views; t is 1-based."""
    if weight_decay != 0.0:
        p -= lr * weight_decay * p
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
