"""Depthwise-separable CNN heart-rate regressor."""

from .network import (
    HR_MAX,
    HR_MIN,
    TABLE_TRACE,
    Model,
    StaleCacheError,
    backward,
    build_model,
    denormalize_label,
    forward,
    loss,
    loss_grad,
    normalize_label,
    predict_hr,
    shape_trace,
)
from .serialize import ModelFormatError, from_bytes, load_model, save_model, to_bytes
from .training import NumericError, TrainConfig, TrainLog, train

__all__ = [
    "HR_MAX", "HR_MIN", "TABLE_TRACE", "Model", "StaleCacheError", "backward",
    "build_model", "denormalize_label", "forward", "loss", "loss_grad",
    "normalize_label", "predict_hr", "shape_trace", "NumericError",
    "TrainConfig", "TrainLog", "train", "ModelFormatError", "from_bytes",
    "load_model", "save_model", "to_bytes",
]
