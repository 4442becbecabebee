"""Synthetic clips with a known pulse, for end-to-end checks.

A flat "face" patch on a static background has its colour modulated by
``amplitude * sin(phase(t))`` where the phase integrates bpm(t)/60. Landmarks
put the cheek ROI inside the patch, and the ground-truth file samples bpm(t).
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ingest import (
    Clip,
    GroundTruthSeries,
    ManifestEntry,
    write_landmarks,
    write_manifest,
    write_raw_frame,
)
from .roi import N_LANDMARKS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HrTimeline:
    """Piecewise-linear bpm(t) through (time_s, bpm) knots.

    Two knots at the same time make a step.
    """

    times: tuple
    bpms: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        b = np.asarray(self.bpms, dtype=np.float64)
        if t.shape != b.shape or t.size == 0:
            raise ValueError("times and bpms must be non-empty and equal length")
        if np.any(np.diff(t) < 0):
            raise ValueError("knot times must be non-decreasing")
        if b.min() < 45 or b.max() > 240:
            raise ValueError("bpm timeline must stay within [45, 240]")

    @classmethod
    def constant(cls, bpm):
        return cls((0.0,), (float(bpm),))

    @classmethod
    def step(cls, before, after, at, duration):
        return cls((0.0, at, at, duration), (before, before, after, after))

    @classmethod
    def sweep(cls, start, end, duration):
        return cls((0.0, duration), (start, end))

    def bpm(self, t):
        """bpm at times ``t``; at a step the later value wins."""
        t = np.asarray(t, dtype=np.float64)
        times = np.asarray(self.times)
        bpms = np.asarray(self.bpms)
        out = np.interp(t, times, bpms)
        # np.interp picks the earlier side of a duplicated knot; prefer the later.
        for k in range(len(times) - 1):
            if times[k] == times[k + 1]:
                out = np.where(t == times[k], bpms[k + 1], out)
        return out

    def cycles(self, t):
        """Integral of bpm/60 from 0 to ``t`` (number of beats)."""
        t = np.asarray(t, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.float64)
        hz = np.asarray(self.bpms, dtype=np.float64) / 60.0
        if times[0] > 0:
            times = np.concatenate([[0.0], times])
            hz = np.concatenate([[hz[0]], hz])
        seg = np.diff(times) * (hz[:-1] + hz[1:]) / 2.0
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1)
        t0 = times[k]
        f0 = hz[k]
        nxt = np.minimum(k + 1, len(times) - 1)
        span = times[nxt] - t0
        slope = np.where((span > 0) & (nxt > k), (hz[nxt] - f0) / np.where(span > 0, span, 1.0), 0.0)
        dt = t - t0
        return cum[k] + f0 * dt + 0.5 * slope * dt * dt

    def mean(self):
        return float(np.mean(self.bpms))


@dataclass(frozen=True)
class SynthSpec:
    duration_s: float = 10.0
    fps: float = 25.0
    frame_size: tuple = (64, 64)
    base_rgb: tuple = (170.0, 120.0, 100.0)
    background_rgb: tuple = (40.0, 60.0, 80.0)
    amplitude: tuple = (0.6, 1.2, 0.4)
    hr: HrTimeline = field(default_factory=lambda: HrTimeline.constant(75.0))
    noise_sigma: float = 1.0
    drift_px_s: tuple = (0.0, 0.0)
    phase: float = 0.0
    gt_rate: float = 1000.0
    float_frames: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.fps <= 0 or self.duration_s <= 0 or self.gt_rate <= 0:
            raise ValueError("fps, duration and gt_rate must be positive")
        if min(self.amplitude) < 0:
            raise ValueError("amplitude must be non-negative")

    @property
    def n_frames(self):
        return int(round(self.duration_s * self.fps))


# Face box used by the landmark template, as fractions of the frame.
FACE_BOX = (0.15, 0.1, 0.7, 0.8)  # x, y, width, height


def landmark_template(frame_size):
    """68 landmarks (1-based numbering by row index + 1) in pixels.

    Points 13/16 bound the cheek band horizontally, 40/41/46/47 sit on the
    lower eyelids and 50/52 on the upper lip; the rest trace the face oval.
    """
    h, w = frame_size
    fx, fy, fw, fh = FACE_BOX[0] * w, FACE_BOX[1] * h, FACE_BOX[2] * w, FACE_BOX[3] * h
    ang = np.linspace(0, 2 * np.pi, N_LANDMARKS, endpoint=False)
    pts = np.stack([fx + fw * (0.5 + 0.48 * np.cos(ang)),
                    fy + fh * (0.5 + 0.48 * np.sin(ang))], axis=1)

    def put(num, u, v):
        pts[num - 1] = (fx + u * fw, fy + v * fh)

    put(13, 0.12, 0.55)
    put(16, 0.88, 0.55)
    put(40, 0.35, 0.38)
    put(41, 0.30, 0.37)
    put(46, 0.70, 0.37)
    put(47, 0.65, 0.38)
    put(50, 0.45, 0.80)
    put(52, 0.55, 0.79)
    return pts


def face_mask(frame_size, offset=(0.0, 0.0)):
    h, w = frame_size
    fx, fy = FACE_BOX[0] * w + offset[0], FACE_BOX[1] * h + offset[1]
    fw, fh = FACE_BOX[2] * w, FACE_BOX[3] * h
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx >= fx) & (xx < fx + fw) & (yy >= fy) & (yy < fy + fh)


def pulse_signal(spec, t):
    """Per-channel colour offset at times ``t``, shape (len(t), 3)."""
    ph = 2 * np.pi * spec.hr.cycles(t) + spec.phase
    return np.sin(ph)[:, None] * np.asarray(spec.amplitude)[None, :]


def render(spec):
    """Build a Clip in memory (frames float32 or uint8)."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_frames
    h, w = spec.frame_size
    t = np.arange(n) / spec.fps
    pulse = pulse_signal(spec, t)
    template = landmark_template(spec.frame_size)
    base = np.asarray(spec.base_rgb, dtype=np.float64)
    bg = np.asarray(spec.background_rgb, dtype=np.float64)
    dtype = np.float32 if spec.float_frames else np.uint8
    frames = np.empty((n, h, w, 3), dtype=dtype)
    landmarks = []
    vx, vy = spec.drift_px_s
    for k in range(n):
        off = (vx * t[k], vy * t[k])
        mask = face_mask(spec.frame_size, off)
        img = np.where(mask[:, :, None], base + pulse[k], bg)
        if spec.noise_sigma > 0:
            img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
        if spec.float_frames:
            frames[k] = img
        else:
            frames[k] = np.clip(np.floor(img + 0.5), 0, 255)
        landmarks.append(template + np.asarray(off))
    gt_t = np.arange(int(round(spec.duration_s * spec.gt_rate))) / spec.gt_rate
    gt = GroundTruthSeries(spec.hr.bpm(gt_t), spec.gt_rate)
    return Clip(frames, landmarks, gt, spec.fps, name=f"synth{spec.seed}")


def generate(spec, out_dir, name="clip"):
    """Write one clip to ``out_dir/name`` and return its manifest entry."""
    import cv2

    root = Path(out_dir) / name
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    clip = render(spec)
    for k, frame in enumerate(clip.frames):
        if spec.float_frames:
            write_raw_frame(frames_dir / f"{k:06d}.rgbf", frame)
        else:
            if not cv2.imwrite(str(frames_dir / f"{k:06d}.png"), frame[:, :, ::-1]):
                raise OSError(f"cannot write frame into {frames_dir}")
    lm_path = root / "landmarks.txt"
    write_landmarks(lm_path, clip.landmarks)
    gt_path = root / "gt.txt"
    gt_path.write_text("".join(f"{v!r}\n" for v in clip.gt.samples.tolist()))
    return ManifestEntry(frames_dir, lm_path, gt_path, spec.fps, spec.gt_rate)


def corpus_specs(n_clips, hr_range, template=SynthSpec(), seed=0):
    """One spec per clip with bpm drawn uniformly from ``hr_range``.

    Each clip's random stream is derived from (seed, clip index).
    """
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    lo, hi = hr_range
    if hi < lo:
        raise ValueError("hr_range must satisfy lo <= hi")
    specs = []
    for i in range(n_clips):
        rng = np.random.default_rng([seed, i])
        bpm = lo if hi == lo else rng.uniform(lo, hi)
        specs.append(replace(template, hr=HrTimeline.constant(bpm),
                             phase=float(rng.uniform(0, 2 * np.pi)),
                             seed=int(rng.integers(2**31))))
    return specs


def coverage_report(bpms, hr_range, n_bins=6):
    """Histogram of clip bpm values plus a chi-square uniformity statistic."""
    lo, hi = hr_range
    bpms = np.asarray(bpms, dtype=np.float64)
    if hi == lo:
        return {"bins": [lo, hi], "counts": [int(bpms.size)], "chi2": 0.0, "dof": 0}
    counts, edges = np.histogram(bpms, bins=n_bins, range=(lo, hi))
    expected = bpms.size / n_bins
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return {"bins": edges.tolist(), "counts": counts.tolist(), "chi2": chi2, "dof": n_bins - 1}


def make_training_corpus(n_clips, hr_range, out_dir, template=SynthSpec(), seed=0):
    """Write ``n_clips`` clips plus ``manifest.tsv``; return (path, report)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = corpus_specs(n_clips, hr_range, template, seed)
    entries = [generate(s, out_dir, name=f"clip{i:04d}") for i, s in enumerate(specs)]
    manifest = out_dir / "manifest.tsv"
    write_manifest(manifest, entries)
    report = coverage_report([s.hr.bpms[0] for s in specs], hr_range)
    log.info("corpus bpm coverage: %s (chi2=%.2f)", report["counts"], report["chi2"])
    return manifest, report
