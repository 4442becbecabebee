"""Numpy implementations of the hot kernels.

These are the reference versions; the compiled module in ``_ckernels.pyx``
must agree with them to floating-point rounding.
All arrays are NHWC.
"""

import numpy as np

BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def pyr_down(x):
    """Blur with the 5-tap binomial kernel and keep every second pixel.

    ``x`` has shape (N, H, W, C) with even H and W. Borders are mirrored
    without repeating the edge pixel (reflect-101).
    """
    x = np.asarray(x)
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    k = BINOMIAL5.astype(x.dtype)
    xp = np.pad(x, ((0, 0), (2, 2), (0, 0), (0, 0)), mode="reflect")
    tmp = k[0] * xp[:, 0:2 * ho:2]
    for t in range(1, 5):
        tmp = tmp + k[t] * xp[:, t:t + 2 * ho:2]
    tp = np.pad(tmp, ((0, 0), (0, 0), (2, 2), (0, 0)), mode="reflect")
    out = k[0] * tp[:, :, 0:2 * wo:2]
    for t in range(1, 5):
        out = out + k[t] * tp[:, :, t:t + 2 * wo:2]
    return np.ascontiguousarray(out)


def _out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def dw_conv_forward(x, w, stride, pad):
    """Depthwise convolution (cross-correlation). ``w`` is (kh, kw, C)."""
    n, h, wd, c = x.shape
    kh, kw, _ = w.shape
    ho = _out_size(h, kh, stride, pad)
    wo = _out_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    out = np.zeros((n, ho, wo, c), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i:i + stride * (ho - 1) + 1:stride,
                      j:j + stride * (wo - 1) + 1:stride, :] * w[i, j]
    return out


def dw_conv_backward(x, w, dy, stride, pad):
    """Return (dx, dw) for :func:`dw_conv_forward`."""
    n, h, wd, c = x.shape
    kh, kw, _ = w.shape
    ho, wo = dy.shape[1], dy.shape[2]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    dxp = np.zeros(xp.shape, dtype=x.dtype)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            rs = slice(i, i + stride * (ho - 1) + 1, stride)
            cs = slice(j, j + stride * (wo - 1) + 1, stride)
            dxp[:, rs, cs, :] += dy * w[i, j]
            dw[i, j] = np.einsum("nhwc,nhwc->c", dy, xp[:, rs, cs, :])
    dx = dxp[:, pad:pad + h, pad:pad + wd, :] if pad else dxp
    return np.ascontiguousarray(dx), dw


def bn_forward_train(x, gamma, beta, eps):
    """Batch-statistics normalization over all but the last axis.

    Returns (y, xhat, inv_std, mean, var) with population variance.
    """
    c = x.shape[-1]
    x2 = x.reshape(-1, c)
    mean = x2.mean(axis=0)
    var = x2.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = (x2 - mean) * inv_std
    y = xhat * gamma + beta
    return y.reshape(x.shape), xhat.reshape(x.shape), inv_std, mean, var


def bn_backward(dy, xhat, gamma, inv_std):
    """Return (dx, dgamma, dbeta) for batch-statistics normalization."""
    c = dy.shape[-1]
    dy2 = dy.reshape(-1, c)
    xh2 = xhat.reshape(-1, c)
    m = dy2.shape[0]
    dbeta = dy2.sum(axis=0)
    dgamma = (dy2 * xh2).sum(axis=0)
    dx = (gamma * inv_std / m) * (m * dy2 - dbeta - xh2 * dgamma)
    return dx.reshape(dy.shape), dgamma, dbeta
