"""Manifests, frame/landmark/ground-truth readers and per-second windows.

Manifest lines are tab separated::

    frames_dir  landmarks_file  gt_file  fps  gt_rate

Relative paths resolve against the manifest's directory; ``#`` starts a
comment. A frames directory holds either zero-padded 8-bit images
(``000000.png`` ...) or raw float frames (``000000.rgbf``, see
:func:`write_raw_frame`).
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .roi import DEFAULT_INDICES, N_LANDMARKS, RoiRejected, freeze_window

log = logging.getLogger(__name__)

GT_MIN, GT_MAX = 30.0, 300.0
LABEL_MIN, LABEL_MAX = 45.0, 240.0
RAW_MAGIC = b"RGBF"
IMAGE_SUFFIXES = (".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff", ".ppm")
RAW_SUFFIX = ".rgbf"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class ManifestEntry:
    frames_path: Path
    landmarks_path: Path
    gt_path: Path
    fps: float
    gt_rate: float

    @property
    def name(self):
        return self.frames_path.name


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple


@dataclass(frozen=True)
class GroundTruthSeries:
    samples: np.ndarray
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise DataError("ground-truth rate must be positive")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.size and (np.any(~np.isfinite(s)) or s.min() < GT_MIN or s.max() > GT_MAX):
            raise DataError(f"ground-truth samples must lie in [{GT_MIN}, {GT_MAX}] bpm")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class Clip:
    """Everything loaded for one manifest entry."""

    frames: np.ndarray
    landmarks: list
    gt: GroundTruthSeries
    fps: float
    name: str = ""


@dataclass(frozen=True)
class LabeledWindow:
    window_index: int
    roi_window: object
    label_bpm: float


def _frame_files(frames_dir):
    files = [p for p in Path(frames_dir).iterdir()
             if p.suffix.lower() in IMAGE_SUFFIXES + (RAW_SUFFIX,)]
    return sorted(files, key=lambda p: int(p.stem))


def load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    entries = []
    lines = path.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        idx = len(entries)
        fields = [f.strip() for f in text.split("\t")]
        if len(fields) != 5:
            raise DataError(f"manifest entry {idx} (line {lineno}): expected 5 tab-separated fields")
        try:
            fps, gt_rate = float(fields[3]), float(fields[4])
        except ValueError:
            raise DataError(f"manifest entry {idx} (line {lineno}): fps/gt_rate not numeric") from None
        if fps <= 0 or gt_rate <= 0:
            raise DataError(f"manifest entry {idx} (line {lineno}): fps and gt_rate must be > 0")
        frames, lms, gt = (Path(f) if Path(f).is_absolute() else base / f for f in fields[:3])
        if not frames.is_dir():
            raise DataError(f"manifest entry {idx}: frames directory missing: {frames}")
        for p in (lms, gt):
            if not p.is_file():
                raise DataError(f"manifest entry {idx}: file missing: {p}")
        n_frames = len(_frame_files(frames))
        if n_frames < fps:
            raise DataError(f"manifest entry {idx}: {n_frames} frames is less than one second")
        entries.append(ManifestEntry(frames, lms, gt, fps, gt_rate))
    return DatasetManifest(tuple(entries))


def write_manifest(path, entries):
    path = Path(path)
    base = path.parent.resolve()
    lines = ["# frames_dir\tlandmarks_file\tgt_file\tfps\tgt_rate"]
    for e in entries:
        rel = []
        for p in (e.frames_path, e.landmarks_path, e.gt_path):
            p = Path(p).resolve()
            try:
                rel.append(str(p.relative_to(base)))
            except ValueError:
                rel.append(str(p))
        lines.append("\t".join(rel + [f"{e.fps:g}", f"{e.gt_rate:g}"]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_raw_frame(path, frame):
    """Raw float frame: b"RGBF", u32 height, width, channels, f32 planes."""
    frame = np.asarray(frame)
    h, w, c = frame.shape
    planes = np.ascontiguousarray(frame.transpose(2, 0, 1), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC + struct.pack("<III", h, w, c))
        fh.write(planes.tobytes())


def read_raw_frame(path):
    data = Path(path).read_bytes()
    if data[:4] != RAW_MAGIC:
        raise DataError(f"{path}: not a raw float frame")
    h, w, c = struct.unpack("<III", data[4:16])
    if len(data) != 16 + 4 * h * w * c:
        raise DataError(f"{path}: truncated raw frame")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(c, h, w).transpose(1, 2, 0)


def read_frame(path):
    path = Path(path)
    if path.suffix == RAW_SUFFIX:
        return read_raw_frame(path)
    import cv2

    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise DataError(f"cannot decode image {path}")
    return img[:, :, ::-1]


def load_frames(frames_dir):
    files = _frame_files(frames_dir)
    if not files:
        raise DataError(f"no frames in {frames_dir}")
    first = read_frame(files[0])
    out = np.empty((len(files),) + first.shape, dtype=first.dtype)
    out[0] = first
    for k, p in enumerate(files[1:], 1):
        img = read_frame(p)
        if img.shape != first.shape:
            raise DataError(f"{p}: frame size {img.shape} differs from {first.shape}")
        out[k] = img
    return out


def load_landmarks(path, n_frames):
    """Per-frame (68, 2) arrays; frames absent from the file map to None."""
    out = [None] * n_frames
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        text = line.split("#", 1)[0].split()
        if not text:
            continue
        if len(text) != 1 + 2 * N_LANDMARKS:
            raise DataError(f"{path}:{lineno}: expected frame index and {N_LANDMARKS} points")
        k = int(text[0])
        if not 0 <= k < n_frames:
            raise DataError(f"{path}:{lineno}: frame index {k} outside 0..{n_frames - 1}")
        out[k] = np.array(text[1:], dtype=np.float64).reshape(N_LANDMARKS, 2)
    return out


def write_landmarks(path, landmarks):
    with open(path, "w") as fh:
        for k, pts in enumerate(landmarks):
            if pts is None:
                continue
            coords = " ".join(f"{v:.3f}" for v in np.asarray(pts).reshape(-1))
            fh.write(f"{k} {coords}\n")


def load_ground_truth(path, rate):
    try:
        vals = [float(t) for t in Path(path).read_text().split()]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return GroundTruthSeries(np.array(vals), rate)


def label_for_second(gt, second):
    """Mean of the samples covering [second, second + 1)."""
    rate = gt.rate
    start = int(round(second * rate))
    stop = int(round((second + 1) * rate))
    if second < 0 or stop > gt.samples.size:
        raise DataError(f"second {second} extends past the ground-truth series")
    return float(np.mean(gt.samples[start:stop]))


def load_clip(entry):
    frames = load_frames(entry.frames_path)
    landmarks = load_landmarks(entry.landmarks_path, len(frames))
    gt = load_ground_truth(entry.gt_path, entry.gt_rate)
    return Clip(frames, landmarks, gt, entry.fps, entry.name)


def clamp_label(bpm):
    if bpm < LABEL_MIN or bpm > LABEL_MAX:
        clamped = min(max(bpm, LABEL_MIN), LABEL_MAX)
        log.warning("label %.2f bpm clamped to %.1f", bpm, clamped)
        return clamped
    return bpm


def windows(source, indices=DEFAULT_INDICES):
    """Non-overlapping one-second labeled windows of an entry or a Clip.

    The trailing partial second is dropped. Windows with missing landmarks
    or an unusable ROI are skipped with a warning.
    """
    clip = load_clip(source) if isinstance(source, ManifestEntry) else source
    n = len(clip.frames)
    if len(clip.landmarks) != n:
        raise DataError(f"{clip.name}: {n} frames but {len(clip.landmarks)} landmark slots")
    fps = clip.fps
    out = []
    for s in range(int(n // fps)):
        lo, hi = int(round(s * fps)), int(round((s + 1) * fps))
        try:
            rw = freeze_window(clip.frames[lo:hi], clip.landmarks[lo:hi], s, indices)
        except RoiRejected as exc:
            log.warning("%s: window %d skipped: %s", clip.name, s, exc)
            continue
        label = clamp_label(label_for_second(clip.gt, s))
        out.append(LabeledWindow(s, rw, label))
    return out
