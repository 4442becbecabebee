"""Feature images: pyramid downsampling, column stacking, ideal bandpass.

One second of ROI crops becomes a rows x Fps x 3 image. Each crop is resized,
reduced with a Gaussian pyramid to a tiny image, flattened to a column; the
columns are placed side by side and every row (one pixel's trace over the
second) is bandpassed in the frequency domain.
"""

import csv
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels

FIM_MAGIC = b"FIM1"


@dataclass(frozen=True)
class FeatureConfig:
    pyramid_level: int = 4
    fps: int = 25
    f_low: float = 0.75
    f_high: float = 4.0
    pre_resize: tuple = (80, 80)

    def __post_init__(self):
        if not 0 < self.f_low < self.f_high <= self.fps / 2:
            raise ValueError(
                f"band [{self.f_low}, {self.f_high}] Hz must satisfy 0 < low < high <= fps/2")
        if self.pyramid_level < 0:
            raise ValueError("pyramid_level must be >= 0")
        h0, w0 = self.pre_resize
        step = 1 << self.pyramid_level
        if h0 % step or w0 % step:
            raise ValueError(f"pre_resize {self.pre_resize} not divisible by 2**{self.pyramid_level}")
        if self.rows != self.fps:
            raise ValueError(
                f"pre_resize {self.pre_resize} at level {self.pyramid_level} gives "
                f"{self.rows} rows; expected fps={self.fps}")

    @property
    def rows(self):
        h0, w0 = self.pre_resize
        return (h0 >> self.pyramid_level) * (w0 >> self.pyramid_level)

    @property
    def shape(self):
        return (self.rows, self.fps, 3)


def gaussian_downsample(img):
    """Halve an image (H, W, C) or a stack (N, H, W, C).

    Separable (1, 4, 6, 4, 1)/16 blur, reflect-101 borders, keep even pixels.
    """
    arr = np.asarray(img, dtype=np.float64)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValueError("expected (H, W, C) or (N, H, W, C)")
    if arr.shape[1] % 2 or arr.shape[2] % 2:
        raise ValueError(f"image dimensions must be even, got {arr.shape[1:3]}")
    out = _kernels.pyr_down(np.ascontiguousarray(arr))
    return out[0] if single else out


def to_column(img):
    """Row-major flatten of (H, W, C) into (H*W, C)."""
    img = np.asarray(img)
    return img.reshape(img.shape[0] * img.shape[1], img.shape[2])


def from_column(col, height, width):
    col = np.asarray(col)
    return col.reshape(height, width, col.shape[-1])


def concat_columns(cols, fps):
    """Stack per-frame columns side by side: column i comes from frame i."""
    cols = [np.asarray(c) for c in cols]
    if len(cols) != fps:
        raise ValueError(f"need exactly {fps} columns, got {len(cols)}")
    if len({c.shape for c in cols}) != 1:
        raise ValueError("columns have different lengths")
    return np.stack(cols, axis=1)


def band_mask(n, fs, f_low, f_high):
    """Boolean mask over FFT bins whose |frequency| lies in [f_low, f_high].

    Bin k and -k always share a verdict, so filtered rows stay real.
    """
    freqs = np.abs(np.fft.fftfreq(n, d=1.0 / fs))
    return (freqs >= f_low) & (freqs <= f_high)


def resample_time(m, n_out):
    """Linearly resample the time axis (axis 1) of M from its length to n_out.

    Both grids cover the same second with samples at i / n.
    """
    n_in = m.shape[1]
    if n_in == n_out:
        return m
    t_out = np.arange(n_out) / n_out * n_in
    lo = np.minimum(np.floor(t_out).astype(int), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = (t_out - lo)[None, :, None]
    return m[:, lo] * (1.0 - frac) + m[:, hi] * frac


def bandpass_rows(m, cfg=FeatureConfig(), return_imag=False):
    """Zero every per-row DFT bin outside [f_low, f_high] and transform back.

    ``m`` is (rows, N, C) with N samples spanning one second at ``cfg.fps``.
    """
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite values in concatenated image")
    n = m.shape[1]
    if n != cfg.fps:
        raise ValueError(f"expected {cfg.fps} columns, got {n}")
    spec = np.fft.fft(m, axis=1)
    spec[:, ~band_mask(n, cfg.fps, cfg.f_low, cfg.f_high)] = 0.0
    back = np.fft.ifft(spec, axis=1)
    if return_imag:
        return back.real, back.imag
    return back.real


@lru_cache(maxsize=64)
def _bilinear_matrix(n_in, n_out):
    """Rows of interpolation weights, half-pixel centres, edges clamped."""
    mat = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    np.add.at(mat, (np.arange(n_out), lo), 1.0 - frac)
    np.add.at(mat, (np.arange(n_out), hi), frac)
    mat.setflags(write=False)
    return mat


def resize_bilinear(frames, size):
    """Resize (N, h, w, C) frames to (N, H, W, C) with bilinear weights."""
    frames = np.asarray(frames, dtype=np.float64)
    hh, ww = size
    ry = _bilinear_matrix(frames.shape[1], hh)
    rx = _bilinear_matrix(frames.shape[2], ww)
    tmp = np.einsum("ij,njkc->nikc", ry, frames, optimize=True)
    return np.einsum("lk,nikc->nilc", rx, tmp, optimize=True)


def pyramid_columns(crops, cfg=FeatureConfig()):
    """Resize, downsample ``pyramid_level`` times and flatten each crop.

    Returns the concatenated raw image M of shape (rows, n_frames, 3).
    """
    x = resize_bilinear(crops, cfg.pre_resize)
    for _ in range(cfg.pyramid_level):
        x = gaussian_downsample(x)
    n = x.shape[0]
    return x.reshape(n, -1, x.shape[-1]).transpose(1, 0, 2)


def extract(window, cfg=FeatureConfig()):
    """Feature image (rows, fps, 3) for one window of ROI crops.

    ``window`` is either a RoiWindow or an (n_frames, h, w, 3) array covering
    one second. Windows with a frame count other than ``cfg.fps`` are
    resampled in time before filtering.
    """
    crops = getattr(window, "crops", window)
    crops = np.asarray(crops)
    if crops.ndim != 4 or crops.shape[-1] != 3:
        raise ValueError(f"expected (n, h, w, 3) crops, got {crops.shape}")
    m = pyramid_columns(crops, cfg)
    m = resample_time(m, cfg.fps)
    return bandpass_rows(m, cfg)


def extract_labeled(windows, cfg=FeatureConfig()):
    """Stack feature images and bpm labels for a list of labeled windows.

    Returns (images float32 (n, rows, fps, 3), labels float64 (n,),
    window indices (n,)).
    """
    images = np.zeros((len(windows),) + cfg.shape, dtype=np.float32)
    labels = np.zeros(len(windows))
    index = np.zeros(len(windows), dtype=np.int64)
    for k, w in enumerate(windows):
        images[k] = extract(w.roi_window, cfg)
        labels[k] = w.label_bpm
        index[k] = w.window_index
    return images, labels, index


def write_fim(path, img):
    """Write a feature image: magic, u32 rows/cols/channels, f32 planes."""
    img = np.asarray(img)
    rows, cols, chans = img.shape
    planes = np.ascontiguousarray(img.transpose(2, 0, 1), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FIM_MAGIC)
        fh.write(struct.pack("<III", rows, cols, chans))
        fh.write(planes.tobytes())


def read_fim(path):
    data = Path(path).read_bytes()
    if data[:4] != FIM_MAGIC:
        raise ValueError(f"{path}: not a feature image (bad magic)")
    rows, cols, chans = struct.unpack("<III", data[4:16])
    expected = 16 + 4 * rows * cols * chans
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    planes = np.frombuffer(data, dtype="<f4", offset=16).reshape(chans, rows, cols)
    return planes.transpose(1, 2, 0).astype(np.float32)


def write_labels(path, rows):
    """Write ``(fim_path, label_bpm)`` pairs as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for fim_path, bpm in rows:
            writer.writerow([str(fim_path), repr(float(bpm))])


def read_labels(path):
    base = Path(path).parent
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            p = Path(row[0])
            out.append((p if p.is_absolute() else base / p, float(row[1])))
    return out
