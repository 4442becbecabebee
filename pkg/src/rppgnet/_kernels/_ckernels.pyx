# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()

cdef double[5] _BINOM = [1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16]


cdef inline Py_ssize_t _reflect101(Py_ssize_t i, Py_ssize_t n) nogil:
    if n == 1:
        return 0
    while i < 0 or i >= n:
        if i < 0:
            i = -i
        if i >= n:
            i = 2 * (n - 1) - i
    return i


def pyr_down(x):
    x = np.ascontiguousarray(x)
    if x.dtype == np.float32:
        return _pyr_down[float](x)
    return _pyr_down[double](np.asarray(x, dtype=np.float64))


cdef _pyr_down(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = h // 2, wo = w // 2
    cdef Py_ssize_t b, r, q, ch, t, src
    cdef floating kt
    dtype = np.float32 if floating is float else np.float64
    tmp_arr = np.zeros((n, ho, w, c), dtype=dtype)
    out_arr = np.zeros((n, ho, wo, c), dtype=dtype)
    cdef floating[:, :, :, ::1] tmp = tmp_arr
    cdef floating[:, :, :, ::1] out = out_arr
    with nogil:
        for b in range(n):
            for r in range(ho):
                for t in range(5):
                    src = _reflect101(2 * r + t - 2, h)
                    kt = <floating>_BINOM[t]
                    for q in range(w):
                        for ch in range(c):
                            tmp[b, r, q, ch] += kt * x[b, src, q, ch]
            for r in range(ho):
                for q in range(wo):
                    for t in range(5):
                        src = _reflect101(2 * q + t - 2, w)
                        kt = <floating>_BINOM[t]
                        for ch in range(c):
                            out[b, r, q, ch] += kt * tmp[b, r, src, ch]
    return out_arr


def dw_conv_forward(x, w, int stride, int pad):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    if x.dtype == np.float32:
        return _dw_forward[float](x, w, stride, pad)
    return _dw_forward[double](x, w, stride, pad)


cdef _dw_forward(floating[:, :, :, ::1] x, floating[:, :, ::1] w, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, r, q, i, j, ch, ir, iq
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, ho, wo, c), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    with nogil:
        for b in range(n):
            for r in range(ho):
                for q in range(wo):
                    for i in range(kh):
                        ir = r * stride + i - pad
                        if ir < 0 or ir >= h:
                            continue
                        for j in range(kw):
                            iq = q * stride + j - pad
                            if iq < 0 or iq >= wd:
                                continue
                            for ch in range(c):
                                out[b, r, q, ch] += x[b, ir, iq, ch] * w[i, j, ch]
    return out_arr


def dw_conv_backward(x, w, dy, int stride, int pad):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    dy = np.ascontiguousarray(dy, dtype=x.dtype)
    if x.dtype == np.float32:
        return _dw_backward[float](x, w, dy, stride, pad)
    return _dw_backward[double](x, w, dy, stride, pad)


cdef _dw_backward(floating[:, :, :, ::1] x, floating[:, :, ::1] w,
                  floating[:, :, :, ::1] dy, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1]
    cdef Py_ssize_t ho = dy.shape[1], wo = dy.shape[2]
    cdef Py_ssize_t b, r, q, i, j, ch, ir, iq
    cdef floating g
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.zeros((n, h, wd, c), dtype=dtype)
    dw_arr = np.zeros((kh, kw, c), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_arr
    cdef floating[:, :, ::1] dw = dw_arr
    with nogil:
        for b in range(n):
            for r in range(ho):
                for q in range(wo):
                    for i in range(kh):
                        ir = r * stride + i - pad
                        if ir < 0 or ir >= h:
                            continue
                        for j in range(kw):
                            iq = q * stride + j - pad
                            if iq < 0 or iq >= wd:
                                continue
                            for ch in range(c):
                                g = dy[b, r, q, ch]
                                dx[b, ir, iq, ch] += g * w[i, j, ch]
                                dw[i, j, ch] += g * x[b, ir, iq, ch]
    return dx_arr, dw_arr


def bn_forward_train(x, gamma, beta, double eps):
    x = np.ascontiguousarray(x)
    c = x.shape[x.ndim - 1]
    x2 = x.reshape(-1, c)
    gamma = np.ascontiguousarray(gamma, dtype=x.dtype)
    beta = np.ascontiguousarray(beta, dtype=x.dtype)
    if x.dtype == np.float32:
        out = _bn_forward[float](x2, gamma, beta, eps)
    else:
        out = _bn_forward[double](x2, gamma, beta, eps)
    y, xhat, inv_std, mean, var = out
    return y.reshape(x.shape), xhat.reshape(x.shape), inv_std, mean, var


cdef _bn_forward(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta, double eps):
    cdef Py_ssize_t m = x.shape[0], c = x.shape[1], i, k
    dtype = np.float32 if floating is float else np.float64
    acc_arr = np.zeros(c, dtype=np.float64)
    acc2_arr = np.zeros(c, dtype=np.float64)
    y_arr = np.empty((m, c), dtype=dtype)
    xhat_arr = np.empty((m, c), dtype=dtype)
    mean_arr = np.empty(c, dtype=dtype)
    var_arr = np.empty(c, dtype=dtype)
    inv_arr = np.empty(c, dtype=dtype)
    cdef double[::1] acc = acc_arr, acc2 = acc2_arr
    cdef floating[:, ::1] y = y_arr, xhat = xhat_arr
    cdef floating[::1] mean = mean_arr, var = var_arr, inv = inv_arr
    cdef double d
    with nogil:
        for i in range(m):
            for k in range(c):
                acc[k] += x[i, k]
        for k in range(c):
            acc[k] /= m
        for i in range(m):
            for k in range(c):
                d = x[i, k] - acc[k]
                acc2[k] += d * d
        for k in range(c):
            mean[k] = <floating>acc[k]
            var[k] = <floating>(acc2[k] / m)
            inv[k] = <floating>(1.0 / (acc2[k] / m + eps) ** 0.5)
        for i in range(m):
            for k in range(c):
                xhat[i, k] = (x[i, k] - mean[k]) * inv[k]
                y[i, k] = xhat[i, k] * gamma[k] + beta[k]
    return y_arr, xhat_arr, inv_arr, mean_arr, var_arr


def bn_backward(dy, xhat, gamma, inv_std):
    dy = np.ascontiguousarray(dy)
    c = dy.shape[dy.ndim - 1]
    dy2 = dy.reshape(-1, c)
    xh2 = np.ascontiguousarray(xhat, dtype=dy.dtype).reshape(-1, c)
    gamma = np.ascontiguousarray(gamma, dtype=dy.dtype)
    inv_std = np.ascontiguousarray(inv_std, dtype=dy.dtype)
    if dy.dtype == np.float32:
        dx, dg, db = _bn_backward[float](dy2, xh2, gamma, inv_std)
    else:
        dx, dg, db = _bn_backward[double](dy2, xh2, gamma, inv_std)
    return dx.reshape(dy.shape), dg, db


cdef _bn_backward(floating[:, ::1] dy, floating[:, ::1] xhat,
                  floating[::1] gamma, floating[::1] inv_std):
    cdef Py_ssize_t m = dy.shape[0], c = dy.shape[1], i, k
    dtype = np.float32 if floating is float else np.float64
    sdy_arr = np.zeros(c, dtype=np.float64)
    sdx_arr = np.zeros(c, dtype=np.float64)
    dx_arr = np.empty((m, c), dtype=dtype)
    cdef double[::1] sdy = sdy_arr, sdx = sdx_arr
    cdef floating[:, ::1] dx = dx_arr
    cdef double scale
    with nogil:
        for i in range(m):
            for k in range(c):
                sdy[k] += dy[i, k]
                sdx[k] += dy[i, k] * xhat[i, k]
        for i in range(m):
            for k in range(c):
                scale = gamma[k] * inv_std[k] / m
                dx[i, k] = <floating>(scale * (m * dy[i, k] - sdy[k] - xhat[i, k] * sdx[k]))
    return dx_arr, sdx_arr.astype(dtype), sdy_arr.astype(dtype)
