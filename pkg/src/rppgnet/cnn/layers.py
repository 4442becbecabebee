"""Layer primitives for the regressor, NHWC layout.

Every layer is a small object holding its parameters. ``forward`` returns
``(output, cache)`` and never mutates the layer; ``backward`` consumes that
cache and returns ``(dx, grads)`` where ``grads`` maps parameter names to
arrays shaped like the parameters.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _kernels


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


class Layer:
    kind = "layer"
    param_names = ()
    buffer_names = ()

    def __init__(self, name):
        self.name = name
        self.params = {}
        self.buffers = {}

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError

    def describe(self):
        return {"kind": self.kind, "name": self.name}


class FullConv(Layer):
    """Standard convolution, weights (kh, kw, in, out), no bias."""

    kind = "full-conv"
    param_names = ("W",)

    def __init__(self, name, kh, kw, cin, cout, stride=1, pad=0):
        super().__init__(name)
        self.kh, self.kw, self.cin, self.cout = kh, kw, cin, cout
        self.stride, self.pad = stride, pad
        self.params["W"] = np.zeros((kh, kw, cin, cout), dtype=np.float32)

    def out_shape(self, in_shape):
        h, w, _ = in_shape
        return (conv_out_size(h, self.kh, self.stride, self.pad),
                conv_out_size(w, self.kw, self.stride, self.pad), self.cout)

    def _cols(self, x):
        p, s = self.pad, self.stride
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        win = sliding_window_view(xp, (self.kh, self.kw), axis=(1, 2))
        win = win[:, ::s, ::s]
        n, ho, wo = win.shape[:3]
        # (N, Ho, Wo, C, kh, kw) -> rows of (C*kh*kw)
        return win.reshape(n * ho * wo, -1), xp.shape, (n, ho, wo)

    def _wmat(self):
        return self.params["W"].transpose(2, 0, 1, 3).reshape(-1, self.cout)

    def forward(self, x, train):
        cols, xp_shape, (n, ho, wo) = self._cols(x)
        y = (cols @ self._wmat()).reshape(n, ho, wo, self.cout)
        return y, (cols, xp_shape, x.shape)

    def backward(self, cache, dy, need_dx=True):
        cols, xp_shape, x_shape = cache
        n, ho, wo, _ = dy.shape
        dy2 = dy.reshape(-1, self.cout)
        dw = (cols.T @ dy2).reshape(self.cin, self.kh, self.kw, self.cout)
        if not need_dx:
            return None, {"W": dw.transpose(1, 2, 0, 3)}
        dcols = (dy2 @ self._wmat().T).reshape(n, ho, wo, self.cin, self.kh, self.kw)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        s = self.stride
        for i in range(self.kh):
            for j in range(self.kw):
                dxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += dcols[..., i, j]
        p = self.pad
        dx = dxp[:, p:p + x_shape[1], p:p + x_shape[2], :] if p else dxp
        return dx, {"W": dw.transpose(1, 2, 0, 3)}

    def describe(self):
        return {**super().describe(), "kernel": [self.kh, self.kw, self.cin, self.cout],
                "stride": self.stride, "pad": self.pad}


class DepthwiseConv(Layer):
    """One (kh, kw) filter per channel."""

    kind = "depthwise-conv"
    param_names = ("W",)

    def __init__(self, name, kh, kw, channels, stride=1, pad=0):
        super().__init__(name)
        self.kh, self.kw, self.channels = kh, kw, channels
        self.stride, self.pad = stride, pad
        self.params["W"] = np.zeros((kh, kw, channels), dtype=np.float32)

    def out_shape(self, in_shape):
        h, w, c = in_shape
        return (conv_out_size(h, self.kh, self.stride, self.pad),
                conv_out_size(w, self.kw, self.stride, self.pad), c)

    def forward(self, x, train):
        y = _kernels.dw_conv_forward(x, self.params["W"], self.stride, self.pad)
        return y, x

    def backward(self, cache, dy):
        dx, dw = _kernels.dw_conv_backward(cache, self.params["W"], dy, self.stride, self.pad)
        return dx, {"W": dw}

    def describe(self):
        return {**super().describe(), "kernel": [self.kh, self.kw, self.channels],
                "stride": self.stride, "pad": self.pad}


class PointwiseConv(Layer):
    """1x1 convolution mixing channels, weights (in, out), no bias."""

    kind = "pointwise-conv"
    param_names = ("W",)

    def __init__(self, name, cin, cout):
        super().__init__(name)
        self.cin, self.cout = cin, cout
        self.params["W"] = np.zeros((cin, cout), dtype=np.float32)

    def out_shape(self, in_shape):
        return in_shape[:2] + (self.cout,)

    def forward(self, x, train):
        n, h, w, _ = x.shape
        x2 = x.reshape(-1, self.cin)
        return (x2 @ self.params["W"]).reshape(n, h, w, self.cout), x2

    def backward(self, cache, dy):
        x2 = cache
        dy2 = dy.reshape(-1, self.cout)
        dx = (dy2 @ self.params["W"].T).reshape(dy.shape[:3] + (self.cin,))
        return dx, {"W": x2.T @ dy2}

    def describe(self):
        return {**super().describe(), "kernel": [1, 1, self.cin, self.cout]}


class BatchNorm(Layer):
    """Per-channel batch normalization over batch and spatial positions.

    Train mode normalizes with the batch statistics, which are returned in
    the cache so the caller can fold them into the running averages.
    """

    kind = "batch-norm"
    param_names = ("gamma", "beta")
    buffer_names = ("running_mean", "running_var")

    def __init__(self, name, channels, eps=1e-5, momentum=0.9):
        super().__init__(name)
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.params["gamma"] = np.ones(channels, dtype=np.float32)
        self.params["beta"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_mean"] = np.zeros(channels, dtype=np.float32)
        self.buffers["running_var"] = np.ones(channels, dtype=np.float32)

    def forward(self, x, train):
        gamma, beta = self.params["gamma"], self.params["beta"]
        if train:
            y, xhat, inv_std, mean, var = _kernels.bn_forward_train(x, gamma, beta, self.eps)
            return y, (xhat, inv_std, mean, var)
        mean = self.buffers["running_mean"].astype(x.dtype)
        var = self.buffers["running_var"].astype(x.dtype)
        inv_std = 1.0 / np.sqrt(var + x.dtype.type(self.eps))
        return (x - mean) * (inv_std * gamma) + beta, None

    def update_running(self, cache):
        _, _, mean, var = cache
        m = self.momentum
        for key, val in (("running_mean", mean), ("running_var", var)):
            buf = self.buffers[key]
            self.buffers[key] = (m * buf + (1 - m) * val).astype(buf.dtype)

    def backward(self, cache, dy):
        if cache is None:
            raise ValueError(f"{self.name}: backward needs a train-mode cache")
        xhat, inv_std, _, _ = cache
        dx, dgamma, dbeta = _kernels.bn_backward(dy, xhat, self.params["gamma"], inv_std)
        return dx, {"gamma": dgamma, "beta": dbeta}

    def describe(self):
        return {**super().describe(), "channels": self.channels, "eps": self.eps,
                "momentum": self.momentum}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train):
        mask = x > 0
        return np.maximum(x, 0), mask

    def backward(self, cache, dy):
        return dy * cache, {}


class AveragePool(Layer):
    """Mean over non-overlapping-or-strided k x k windows, no padding."""

    kind = "average-pool"

    def __init__(self, name, k, stride=1):
        super().__init__(name)
        self.k, self.stride = k, stride

    def out_shape(self, in_shape):
        h, w, c = in_shape
        return (conv_out_size(h, self.k, self.stride, 0),
                conv_out_size(w, self.k, self.stride, 0), c)

    def forward(self, x, train):
        n, h, w, c = x.shape
        ho, wo, _ = self.out_shape((h, w, c))
        s, k = self.stride, self.k
        y = np.zeros((n, ho, wo, c), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                y += x[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :]
        return y / (k * k), x.shape

    def backward(self, cache, dy):
        x_shape = cache
        n, ho, wo, c = dy.shape
        s, k = self.stride, self.k
        dx = np.zeros(x_shape, dtype=dy.dtype)
        g = dy / (k * k)
        for i in range(k):
            for j in range(k):
                dx[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += g
        return dx, {}

    def describe(self):
        return {**super().describe(), "k": self.k, "stride": self.stride}


class FullyConnected(Layer):
    """Affine map on the flattened input, weights (in, out) plus bias."""

    kind = "fully-connected"
    param_names = ("W", "b")

    def __init__(self, name, n_in, n_out):
        super().__init__(name)
        self.n_in, self.n_out = n_in, n_out
        self.params["W"] = np.zeros((n_in, n_out), dtype=np.float32)
        self.params["b"] = np.zeros(n_out, dtype=np.float32)

    def out_shape(self, in_shape):
        return (self.n_out,)

    def forward(self, x, train):
        x2 = x.reshape(x.shape[0], -1)
        if x2.shape[1] != self.n_in:
            raise ValueError(f"{self.name}: expected {self.n_in} inputs, got {x2.shape[1]}")
        return x2 @ self.params["W"] + self.params["b"], (x2, x.shape)

    def backward(self, cache, dy):
        x2, x_shape = cache
        dx = (dy @ self.params["W"].T).reshape(x_shape)
        return dx, {"W": x2.T @ dy, "b": dy.sum(axis=0)}

    def describe(self):
        return {**super().describe(), "kernel": [self.n_in, self.n_out]}


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/keep during training."""

    kind = "dropout"

    def __init__(self, name, keep):
        super().__init__(name)
        if not 0.0 < keep <= 1.0:
            raise ValueError("keep probability must lie in (0, 1]")
        self.keep = keep

    def forward(self, x, train, rng=None):
        if not train or self.keep == 1.0:
            return x, None
        if rng is None:
            raise ValueError("train-mode dropout needs a random generator")
        mask = (rng.random(x.shape) < self.keep).astype(x.dtype) / x.dtype.type(self.keep)
        return x * mask, mask

    def backward(self, cache, dy):
        if cache is None:
            return dy, {}
        return dy * cache, {}

    def describe(self):
        return {**super().describe(), "keep": self.keep}
