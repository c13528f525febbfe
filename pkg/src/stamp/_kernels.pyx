# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot-loop kernels: fused GELU, softmax, layer norm, AdamW.

Contracts mirror ``kernels_py``; the backend module normalizes shapes so
elementwise kernels see flat arrays and row kernels see 2-D C-contiguous
arrays with the reduced axis last. All math is done in double internally
regardless of the storage dtype.
"""

import numpy as np

cimport cython
from cython cimport floating
from libc.math cimport erf, exp, sqrt, pow

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


def gelu_fwd(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v
    for i in range(n):
        v = x[i]
        out[i] = <floating> (0.5 * v * (1.0 + erf(v * INV_SQRT2)))


def gelu_bwd(floating[::1] x, floating[::1] dy, floating[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double v, cdf, pdf
    for i in range(n):
        v = x[i]
        cdf = 0.5 * (1.0 + erf(v * INV_SQRT2))
        pdf = INV_SQRT_2PI * exp(-0.5 * v * v)
        out[i] = <floating> (dy[i] * (cdf + v * pdf))


def softmax_fwd(floating[:, ::1] x, floating[:, ::1] out):
    cdef Py_ssize_t i, j, rows = x.shape[0], n = x.shape[1]
    cdef double mx, s, e
    for i in range(rows):
        mx = x[i, 0]
        for j in range(1, n):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(n):
            e = exp(<double> x[i, j] - mx)
            out[i, j] = <floating> e
            s += e
        for j in range(n):
            out[i, j] = <floating> (out[i, j] / s)


def softmax_bwd(floating[:, ::1] y, floating[:, ::1] dy, floating[:, ::1] out):
    cdef Py_ssize_t i, j, rows = y.shape[0], n = y.shape[1]
    cdef double inner
    for i in range(rows):
        inner = 0.0
        for j in range(n):
            inner += <double> y[i, j] * <double> dy[i, j]
        for j in range(n):
            out[i, j] = <floating> (<double> y[i, j] * (<double> dy[i, j] - inner))


def layernorm_fwd(floating[:, ::1] x, floating[::1] gain, floating[::1] bias,
                  double eps, floating[:, ::1] out, floating[:, ::1] xhat,
                  floating[::1] rstd):
    cdef Py_ssize_t i, j, rows = x.shape[0], n = x.shape[1]
    cdef double mean, var, d, r, xh
    for i in range(rows):
        mean = 0.0
        for j in range(n):
            mean += x[i, j]
        mean /= n
        var = 0.0
        for j in range(n):
            d = <double> x[i, j] - mean
            var += d * d
        var /= n
        r = 1.0 / sqrt(var + eps)
        rstd[i] = <floating> r
        for j in range(n):
            xh = (<double> x[i, j] - mean) * r
            xhat[i, j] = <floating> xh
            out[i, j] = <floating> (xh * <double> gain[j] + <double> bias[j])


def layernorm_bwd(floating[:, ::1] xhat, floating[::1] rstd, floating[::1] gain,
                  floating[:, ::1] dy, floating[:, ::1] dx,
                  floating[::1] dgain, floating[::1] dbias):
    cdef Py_ssize_t i, j, rows = xhat.shape[0], n = xhat.shape[1]
    cdef double t1, t2, dxh
    for j in range(n):
        dgain[j] = 0.0
        dbias[j] = 0.0
    for i in range(rows):
        t1 = 0.0
        t2 = 0.0
        for j in range(n):
            dxh = <double> dy[i, j] * <double> gain[j]
            t1 += dxh
            t2 += dxh * <double> xhat[i, j]
        t1 /= n
        t2 /= n
        for j in range(n):
            dxh = <double> dy[i, j] * <double> gain[j]
            dx[i, j] = <floating> (<double> rstd[i] * (dxh - t1 - <double> xhat[i, j] * t2))
            dgain[j] += <floating> (<double> dy[i, j] * <double> xhat[i, j])
            dbias[j] += dy[i, j]


def adamw_update(floating[::1] p, floating[::1] g, floating[::1] m,
                 floating[::1] v, long t, double lr, double beta1,
                 double beta2, double eps, double weight_decay):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double c1 = 1.0 - pow(beta1, t)
    cdef double c2 = 1.0 - pow(beta2, t)
    cdef double mi, vi
    for i in range(n):
        if weight_decay != 0.0:
            p[i] -= <floating> (lr * weight_decay * <double> p[i])
        mi = beta1 * <double> m[i] + (1.0 - beta1) * <double> g[i]
        vi = beta2 * <double> v[i] + (1.0 - beta2) * (<double> g[i] * <double> g[i])
        m[i] = <floating> mi
        v[i] = <floating> vi
        p[i] -= <floating> (lr * (mi / c1) / (sqrt(vi / c2) + eps))
