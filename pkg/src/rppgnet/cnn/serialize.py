"""Model container.

Layout (little-endian)::

    b"EVMC" | u32 version | u32 n | n bytes JSON descriptor
    | float32 blobs in descriptor order | u32 CRC-32 of everything before
"""

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .network import HR_MAX, HR_MIN, INPUT_SHAPE, build_model

MAGIC = b"EVMC"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def _blobs(model):
    for layer in model.layers:
        for key in layer.param_names:
            yield f"{layer.name}.{key}", layer.params[key]
        for key in layer.buffer_names:
            yield f"{layer.name}.{key}", layer.buffers[key]
    yield "input_mean", model.input_mean
    yield "input_std", model.input_std


def to_bytes(model):
    blobs = list(_blobs(model))
    desc = {
        "input_shape": list(INPUT_SHAPE),
        "label_range": [HR_MIN, HR_MAX],
        "layers": [layer.describe() for layer in model.layers],
        "blobs": [[name, list(arr.shape)] for name, arr in blobs],
    }
    desc_bytes = json.dumps(desc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(desc_bytes)), desc_bytes]
    parts += [np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in blobs]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def from_bytes(data):
    if len(data) < 16 or data[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version, n = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ModelFormatError("checksum mismatch (truncated or corrupted file)")
    try:
        desc = json.loads(data[12:12 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"bad descriptor: {exc}") from None
    keep = next(d["keep"] for d in desc["layers"] if d["kind"] == "dropout")
    model = build_model(seed=None, keep=keep)
    if [layer.describe() for layer in model.layers] != desc["layers"]:
        raise ModelFormatError("architecture descriptor does not match this network")
    offset = 12 + n
    arrays = {}
    for name, shape in desc["blobs"]:
        size = int(np.prod(shape)) * 4
        if offset + size > len(body):
            raise ModelFormatError("parameter data truncated")
        arrays[name] = np.frombuffer(body, dtype="<f4", count=size // 4,
                                     offset=offset).reshape(shape).astype(np.float32)
        offset += size
    if offset != len(body):
        raise ModelFormatError("trailing bytes after parameter data")
    for name, _ in _blobs(model):
        if name not in arrays:
            raise ModelFormatError(f"missing blob {name}")
    for layer in model.layers:
        for key in layer.param_names:
            layer.params[key] = arrays[f"{layer.name}.{key}"]
        for key in layer.buffer_names:
            layer.buffers[key] = arrays[f"{layer.name}.{key}"]
    model.input_mean = arrays["input_mean"]
    model.input_std = arrays["input_std"]
    return model


def save_model(model, path):
    Path(path).write_bytes(to_bytes(model))


def load_model(path):
    return from_bytes(Path(path).read_bytes())
