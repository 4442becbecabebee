"""Cheek region of interest from 68 facial landmarks.

The rectangle spans horizontally between two jaw points and vertically from
the lowest lower-eyelid point down to the higher of two upper-lip points,
so it never contains the eyes or the mouth.
"""

from dataclasses import dataclass, field

import numpy as np

N_LANDMARKS = 68


@dataclass(frozen=True)
class RoiIndices:
    """1-based landmark numbers used by the rectangle."""

    left: int = 13
    right: int = 16
    eye_bottom: tuple = (40, 41, 46, 47)
    lip_top: tuple = (50, 52)


DEFAULT_INDICES = RoiIndices()


class RoiRejected(ValueError):
    """The window cannot yield a valid fixed-size ROI."""

    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


@dataclass(frozen=True)
class RoiRect:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise RoiRejected(f"degenerate ROI {self.width}x{self.height}")

    def translated(self, dx, dy):
        return RoiRect(self.x + dx, self.y + dy, self.width, self.height)

    def fits(self, height, width):
        return (self.x >= 0 and self.y >= 0 and self.x + self.width <= width
                and self.y + self.height <= height)


@dataclass(frozen=True)
class RoiWindow:
    crops: np.ndarray = field(repr=False)
    rect: RoiRect
    second: int = 0


def check_landmarks(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (N_LANDMARKS, 2):
        raise ValueError(f"expected {N_LANDMARKS} (x, y) landmarks, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)) or np.any(pts < 0):
        raise ValueError("landmark coordinates must be finite and non-negative")
    return pts


def _round_half_up(v):
    return int(np.floor(v + 0.5))


def roi_from_landmarks(points, indices=DEFAULT_INDICES):
    """Rectangle (x, y, width, height) from one frame's landmarks."""
    pts = check_landmarks(points)

    def x(i):
        return _round_half_up(pts[i - 1, 0])

    def y(i):
        return _round_half_up(pts[i - 1, 1])

    x_lt = x(indices.left)
    y_lt = max(y(i) for i in indices.eye_bottom)
    width = x(indices.right) - x_lt
    height = min(y(i) for i in indices.lip_top) - y_lt
    return RoiRect(x_lt, y_lt, width, height)


def freeze_window(frames, landmarks, second=0, indices=DEFAULT_INDICES):
    """Crop the first frame's ROI out of every frame of the window.

    ``landmarks`` holds one (68, 2) array per frame, or None where the face
    was not found; any gap rejects the window.
    """
    if len(frames) != len(landmarks):
        raise ValueError("frame and landmark counts differ")
    for k, lm in enumerate(landmarks):
        if lm is None:
            raise RoiRejected(f"frame {k}: no landmarks", frame=k)
    rect = roi_from_landmarks(landmarks[0], indices)
    crops = []
    for k, frame in enumerate(frames):
        h, w = frame.shape[:2]
        if not rect.fits(h, w):
            raise RoiRejected(f"frame {k}: ROI {rect} outside {w}x{h} image", frame=k)
        crops.append(frame[rect.y:rect.y + rect.height, rect.x:rect.x + rect.width])
    return RoiWindow(np.stack(crops), rect, second)
