"""Mini-batch SGD with momentum and step learning-rate decay."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import backward, forward, loss, loss_grad, normalize_label

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 20
    max_iterations: int = 15000
    base_lr: float = 0.01
    momentum: float = 0.9
    lr_step: int = 5000
    lr_gamma: float = 0.1
    weight_decay: float = 0.0
    seed: int = 0
    dropout_keep: float = 0.4
    val_fraction: float = 0.1
    val_every: int = 250
    fit_input_norm: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must lie in (0, 1]")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")

    def lr_at(self, it):
        return self.base_lr * self.lr_gamma ** (it // self.lr_step) if self.lr_step else self.base_lr


@dataclass
class TrainLog:
    iterations: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: dict = field(default_factory=dict)
    best_iteration: int = -1
    best_val_loss: float = float("inf")

    def rows(self):
        """(iteration, train_loss, val_loss or None) per logged iteration."""
        return [(it, tl, self.val_loss.get(it)) for it, tl in zip(self.iterations, self.train_loss)]

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,train_loss,val_loss\n")
            for it, tl, vl in self.rows():
                fh.write(f"{it},{tl!r},{'' if vl is None else repr(vl)}\n")


def fit_input_norm(images):
    """Per-channel mean and standard deviation over a stack of images."""
    x = np.asarray(images, dtype=np.float64).reshape(-1, 3)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean.astype(np.float32), std.astype(np.float32)


def split_indices(n, fraction, rng):
    perm = rng.permutation(n)
    n_val = int(round(n * fraction))
    if fraction > 0 and n_val == 0 and n > 1:
        n_val = 1
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def evaluate_loss(model, images, targets, batch=200):
    preds = [forward(model, images[i:i + batch], mode="infer") for i in range(0, len(images), batch)]
    return loss(np.concatenate(preds), targets)


def _snapshot(model):
    return ({k: v.copy() for k, v in model.named_params()},
            {k: v.copy() for k, v in model.named_buffers()})


def _restore(model, snap):
    params, buffers = snap
    for layer in model.layers:
        for key in layer.param_names:
            layer.params[key] = params[f"{layer.name}.{key}"].copy()
        for key in layer.buffer_names:
            layer.buffers[key] = buffers[f"{layer.name}.{key}"].copy()
    model.version += 1


def train(model, images, labels_bpm, cfg=None, progress=None):
    """Train ``model`` in place on feature images with bpm labels.

    Returns ``(model, TrainLog)``. When a validation split exists the
    parameters of the best validation checkpoint are restored at the end.
    """
    cfg = cfg or TrainConfig()
    images = np.asarray(images, dtype=np.float32)
    labels = normalize_label(np.asarray(labels_bpm, dtype=np.float64))
    if len(images) == 0:
        raise ValueError("empty training set")
    if len(images) != len(labels):
        raise ValueError("images and labels differ in length")
    rng = np.random.default_rng(cfg.seed)
    tr_idx, va_idx = split_indices(len(images), cfg.val_fraction, rng)
    if cfg.fit_input_norm:
        model.input_mean, model.input_std = fit_input_norm(images[tr_idx])
    model.layer("drop").keep = cfg.dropout_keep
    x_tr, y_tr = images[tr_idx], labels[tr_idx].astype(np.float32)
    x_va, y_va = images[va_idx], labels[va_idx]

    velocity = {k: np.zeros_like(v) for k, v in model.named_params()}
    bn_layers = [(i, layer) for i, layer in enumerate(model.layers) if layer.kind == "batch-norm"]
    history = TrainLog()
    best = None
    order = rng.permutation(len(x_tr))
    pos = 0
    bs = min(cfg.batch_size, len(x_tr))
    for it in range(cfg.max_iterations):
        if pos + bs > len(order):
            order = rng.permutation(len(x_tr))
            pos = 0
        batch = order[pos:pos + bs]
        pos += bs
        pred, cache = forward(model, x_tr[batch], mode="train", rng=rng)
        value = loss(pred, y_tr[batch])
        if not np.isfinite(value):
            raise NumericError(f"non-finite training loss at iteration {it} "
                               f"(lr={cfg.lr_at(it):g}, last finite={history.train_loss[-1:]})")
        grads = backward(model, cache, loss_grad(pred, y_tr[batch]))
        for i, layer in bn_layers:
            layer.update_running(cache.entries[i])
        lr = np.float32(cfg.lr_at(it))
        mu = np.float32(cfg.momentum)
        for layer in model.layers:
            for key in layer.param_names:
                name = f"{layer.name}.{key}"
                g = grads[name]
                if cfg.weight_decay:
                    g = g + np.float32(cfg.weight_decay) * layer.params[key]
                v = velocity[name]
                v *= mu
                v -= lr * g.astype(v.dtype)
                layer.params[key] = layer.params[key] + v
        model.version += 1
        history.iterations.append(it)
        history.train_loss.append(value)
        last = it == cfg.max_iterations - 1
        if len(x_va) and ((it + 1) % cfg.val_every == 0 or last):
            vl = evaluate_loss(model, x_va, y_va)
            history.val_loss[it] = vl
            if vl < history.best_val_loss:
                history.best_val_loss = vl
                history.best_iteration = it
                best = _snapshot(model)
            if progress:
                progress(it, value, vl)
            log.info("iter %d train %.5f val %.5f lr %g", it, value, vl, lr)
    if best is not None:
        _restore(model, best)
    return model, history
