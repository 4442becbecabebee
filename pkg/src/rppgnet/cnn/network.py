"""The depthwise-separable regressor: construction, forward/backward, loss."""

import os

import numpy as np

from .layers import (
    AveragePool,
    BatchNorm,
    DepthwiseConv,
    Dropout,
    FullConv,
    FullyConnected,
    PointwiseConv,
    ReLU,
)

HR_MIN = 45.0
HR_MAX = 240.0
INPUT_SHAPE = (25, 25, 3)

DEBUG = os.environ.get("RPPGNET_DEBUG", "") not in ("", "0")

# (kind, args) for every layer that changes the activation shape; each
# convolution is followed by batch norm + ReLU. Padding is chosen so the
# shapes land exactly on 23, 21, 21, 11, 11, 6, 6, 3, 3, 2, 2, 1.
BODY = [
    ("conv", dict(kh=5, kw=5, cin=3, cout=96, stride=1, pad=1)),
    ("dw", dict(channels=96, stride=1, pad=0)),
    ("pw", dict(cin=96, cout=96)),
    ("dw", dict(channels=96, stride=2, pad=1)),
    ("pw", dict(cin=96, cout=96)),
    ("dw", dict(channels=96, stride=2, pad=1)),
    ("pw", dict(cin=96, cout=128)),
    ("dw", dict(channels=128, stride=2, pad=1)),
    ("pw", dict(cin=128, cout=128)),
    ("dw", dict(channels=128, stride=2, pad=1)),
    ("pw", dict(cin=128, cout=128)),
]

# Output shape of each shape-bearing layer for a 25x25x3 input.
TABLE_TRACE = [
    (23, 23, 96), (21, 21, 96), (21, 21, 96), (11, 11, 96), (11, 11, 96),
    (6, 6, 96), (6, 6, 128), (3, 3, 128), (3, 3, 128), (2, 2, 128),
    (2, 2, 128), (1, 1, 128), (192,), (192,), (1,),
]

SHAPE_KINDS = ("full-conv", "depthwise-conv", "pointwise-conv",
               "average-pool", "fully-connected", "dropout")


def normalize_label(hr):
    """Map bpm onto [0, 1] with 45 bpm -> 0 and 240 bpm -> 1."""
    return (np.asarray(hr, dtype=np.float64) - HR_MIN) / (HR_MAX - HR_MIN)


def denormalize_label(v):
    return np.asarray(v, dtype=np.float64) * (HR_MAX - HR_MIN) + HR_MIN


class StaleCacheError(RuntimeError):
    pass


class Model:
    """Ordered layers plus input/label normalization constants."""

    def __init__(self, layers, input_mean=None, input_std=None):
        self.layers = layers
        self.input_mean = (np.zeros(3, dtype=np.float32) if input_mean is None
                           else np.asarray(input_mean, dtype=np.float32))
        self.input_std = (np.ones(3, dtype=np.float32) if input_std is None
                          else np.asarray(input_std, dtype=np.float32))
        self.hr_min = HR_MIN
        self.hr_max = HR_MAX
        self.version = 0

    @property
    def dtype(self):
        for layer in self.layers:
            for p in layer.params.values():
                return p.dtype
        return np.dtype(np.float32)

    def named_params(self):
        for layer in self.layers:
            for key in layer.param_names:
                yield f"{layer.name}.{key}", layer.params[key]

    def named_buffers(self):
        for layer in self.layers:
            for key in layer.buffer_names:
                yield f"{layer.name}.{key}", layer.buffers[key]

    def get_param(self, full_name):
        lname, key = full_name.rsplit(".", 1)
        return self.layer(lname).params[key]

    def set_param(self, full_name, value):
        lname, key = full_name.rsplit(".", 1)
        layer = self.layer(lname)
        layer.params[key] = np.asarray(value, dtype=layer.params[key].dtype)
        self.version += 1

    def layer(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def n_params(self):
        return sum(p.size for _, p in self.named_params())

    def astype(self, dtype):
        """Deep copy with every parameter and buffer cast to ``dtype``."""
        clone = build_model(seed=None, keep=self.layer("drop").keep)
        for src, dst in zip(self.layers, clone.layers):
            for key, val in src.params.items():
                dst.params[key] = val.astype(dtype)
            for key, val in src.buffers.items():
                dst.buffers[key] = val.astype(dtype)
        clone.input_mean = self.input_mean.copy()
        clone.input_std = self.input_std.copy()
        return clone

    def copy(self):
        return self.astype(self.dtype)


def build_model(seed=0, keep=0.4):
    """Construct the network; ``seed=None`` leaves weights at zero.

    Conv and FC weights use a fan-in scaled uniform draw; the last layer
    uses a narrower bound since no ReLU follows it.
    """
    layers = []
    counts = {"conv": 0, "dw": 0, "pw": 0}
    for kind, args in BODY:
        counts[kind] += 1
        name = f"{kind}{counts[kind]}"
        if kind == "conv":
            layers.append(FullConv(name, **args))
            ch = args["cout"]
        elif kind == "dw":
            layers.append(DepthwiseConv(name, 3, 3, **args))
            ch = args["channels"]
        else:
            layers.append(PointwiseConv(name, **args))
            ch = args["cout"]
        layers.append(BatchNorm(f"{name}_bn", ch))
        layers.append(ReLU(f"{name}_relu"))
    layers.append(AveragePool("pool", 2, stride=1))
    layers.append(FullyConnected("fc1", 128, 192))
    layers.append(ReLU("fc1_relu"))
    layers.append(Dropout("drop", keep))
    layers.append(FullyConnected("fc2", 192, 1))
    model = Model(layers)
    if seed is not None:
        init_weights(model, seed)
    return model


def init_weights(model, seed):
    rng = np.random.default_rng(seed)
    for layer in model.layers:
        if "W" not in layer.params:
            continue
        w = layer.params["W"]
        if layer.kind == "depthwise-conv":
            fan_in = w.shape[0] * w.shape[1]
        elif layer.kind in ("full-conv",):
            fan_in = w.shape[0] * w.shape[1] * w.shape[2]
        else:
            fan_in = w.shape[0]
        gain = 3.0 if layer.name == "fc2" else 6.0
        bound = np.sqrt(gain / fan_in)
        layer.params["W"] = rng.uniform(-bound, bound, size=w.shape).astype(w.dtype)
    model.version += 1


def _check_input(x):
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != INPUT_SHAPE:
        raise ValueError(f"input must be 25x25x3 per sample, got {x.shape[1:]}")
    return x


def prepare_input(model, x):
    """Apply the stored per-channel standardization, cast to model dtype."""
    x = _check_input(x)
    dt = model.dtype
    mean = model.input_mean.astype(dt)
    std = model.input_std.astype(dt)
    return (x.astype(dt) - mean) / std


class ForwardCache:
    def __init__(self, version, entries):
        self.version = version
        self.entries = entries
        self.consumed = False


def forward(model, x, mode="infer", rng=None, return_cache=None, trace=None):
    """Run the network on a batch of feature images (or a single one).

    Returns predictions on the unit interval with shape (N,). In train mode
    also returns a cache for :func:`backward`. ``trace``, when a list, is
    filled with (layer kind, per-sample output shape) for every layer.
    """
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    train = mode == "train"
    h = prepare_input(model, x)
    entries = []
    for layer in model.layers:
        if layer.kind == "dropout":
            h, cache = layer.forward(h, train, rng=rng)
        else:
            h, cache = layer.forward(h, train)
        if DEBUG and not np.all(np.isfinite(h)):
            raise FloatingPointError(f"non-finite activation after {layer.name}")
        if trace is not None:
            trace.append((layer.kind, h.shape[1:]))
        entries.append(cache)
    pred = h.reshape(-1)
    if return_cache is None:
        return_cache = train
    if return_cache:
        return pred, ForwardCache(model.version, entries)
    return pred


def backward(model, cache, dpred):
    """Gradients of every parameter given d(loss)/d(prediction)."""
    if cache is None or not isinstance(cache, ForwardCache):
        raise StaleCacheError("backward needs the cache of a train-mode forward")
    if cache.version != model.version:
        raise StaleCacheError("model parameters changed since the forward pass")
    dy = np.asarray(dpred, dtype=model.dtype).reshape(-1, 1)
    grads = {}
    last = len(model.layers) - 1
    for k, (layer, entry) in enumerate(zip(reversed(model.layers), reversed(cache.entries))):
        if k == last and layer.kind == "full-conv":
            dy, g = layer.backward(entry, dy, need_dx=False)
        else:
            dy, g = layer.backward(entry, dy)
        for key, val in g.items():
            grads[f"{layer.name}.{key}"] = val
    return grads


def loss(pred, labels):
    """Half mean squared error, (1/2N) sum (q - p)^2."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if pred.size == 0:
        raise ValueError("empty batch")
    if pred.shape != labels.shape:
        raise ValueError("prediction and label batches differ in length")
    d = labels - pred
    return float(d @ d) / (2 * pred.size)


def loss_grad(pred, labels):
    pred = np.asarray(pred).reshape(-1)
    labels = np.asarray(labels, dtype=pred.dtype).reshape(-1)
    return (pred - labels) / pred.size


def shape_trace(model, x=None):
    """Per-sample activation shape after each shape-bearing layer."""
    if x is None:
        x = np.zeros((2,) + INPUT_SHAPE, dtype=np.float32)
    trace = []
    forward(model, x, mode="infer", trace=trace)
    return [tuple(shape) for kind, shape in trace if kind in SHAPE_KINDS]


def predict_hr(model, x):
    """Heart rate in bpm for one feature image or a batch, clamped to 45-240."""
    single = np.asarray(x).ndim == 3
    raw = forward(model, x, mode="infer")
    bpm = np.clip(denormalize_label(raw), HR_MIN, HR_MAX)
    return float(bpm[0]) if single else bpm
