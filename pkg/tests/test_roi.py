import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import eq1_rect
from rppgnet import roi, synth
from rppgnet.roi import RoiRect, RoiRejected


def _landmarks(p13x=100, p16x=220, eyes=(208, 210, 207, 209), lips=(300, 305)):
    pts = np.full((68, 2), 150.0)
    pts[12, 0] = p13x
    pts[15, 0] = p16x
    for num, y in zip((40, 41, 46, 47), eyes):
        pts[num - 1, 1] = y
    for num, y in zip((50, 52), lips):
        pts[num - 1, 1] = y
    return pts


def test_direct_substitution():
    assert roi.roi_from_landmarks(_landmarks()) == RoiRect(100, 210, 120, 90)


def test_zero_width_rejected():
    with pytest.raises(RoiRejected):
        roi.roi_from_landmarks(_landmarks(p16x=100))


def test_negative_height_rejected():
    with pytest.raises(RoiRejected):
        roi.roi_from_landmarks(_landmarks(lips=(200, 205)))


@pytest.mark.parametrize("bad", [np.zeros((67, 2)), np.full((68, 2), -1.0), np.full((68, 2), np.nan)])
def test_invalid_landmarks(bad):
    with pytest.raises(ValueError):
        roi.roi_from_landmarks(bad)


def test_half_up_rounding():
    pts = _landmarks(p13x=100.5, p16x=220.49)
    rect = roi.roi_from_landmarks(pts)
    assert (rect.x, rect.width) == (101, 119)


def test_random_landmarks_match_oracle(rng):
    checked = 0
    for _ in range(500):
        pts = rng.uniform(0, 400, size=(68, 2))
        # bias the used points so most rectangles are valid but some are not
        pts[12, 0] = rng.uniform(0, 200)
        pts[15, 0] = max(0.0, pts[12, 0] + rng.uniform(-10, 200))
        pts[[39, 40, 45, 46], 1] = rng.uniform(100, 200, 4)
        pts[[49, 51], 1] = rng.uniform(180, 320, 2)
        expected = eq1_rect(pts.tolist())
        if expected[2] <= 0 or expected[3] <= 0:
            with pytest.raises(RoiRejected):
                roi.roi_from_landmarks(pts)
            continue
        rect = roi.roi_from_landmarks(pts)
        assert (rect.x, rect.y, rect.width, rect.height) == expected
        checked += 1
    assert 100 < checked < 500


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 200), st.integers(0, 200))
def test_translation_equivariance(dx, dy):
    pts = _landmarks()
    a = roi.roi_from_landmarks(pts)
    b = roi.roi_from_landmarks(pts + [dx, dy])
    assert b == a.translated(dx, dy)


def test_excludes_eyes_and_mouth(rng):
    for _ in range(200):
        pts = _landmarks(eyes=tuple(rng.uniform(150, 220, 4)), lips=tuple(rng.uniform(260, 320, 2)))
        rect = roi.roi_from_landmarks(pts)
        eye_ys = [np.floor(pts[n - 1, 1] + 0.5) for n in (40, 41, 46, 47)]
        lip_ys = [np.floor(pts[n - 1, 1] + 0.5) for n in (50, 52)]
        assert rect.y >= max(eye_ys)
        assert rect.y + rect.height <= min(lip_ys)


def test_custom_indices():
    pts = _landmarks()
    pts[0, 0] = 90
    idx = roi.RoiIndices(left=1)
    assert roi.roi_from_landmarks(pts, idx).x == 90


class TestFreezeWindow:
    def _clip(self, **kw):
        spec = synth.SynthSpec(duration_s=1, noise_sigma=0.0, amplitude=(0, 0, 0), **kw)
        return synth.render(spec)

    def test_stationary_crops_identical(self):
        clip = self._clip()
        w = roi.freeze_window(clip.frames, clip.landmarks)
        assert w.crops.shape[0] == 25
        assert all(np.array_equal(w.crops[0], c) for c in w.crops)

    def test_out_of_bounds_names_frame(self):
        clip = self._clip()
        frames = list(clip.frames)
        frames[7] = frames[7][:20]
        with pytest.raises(RoiRejected) as exc:
            roi.freeze_window(frames, clip.landmarks)
        assert exc.value.frame == 7
        assert "frame 7" in str(exc.value)

    def test_missing_landmarks(self):
        clip = self._clip()
        lms = list(clip.landmarks)
        lms[3] = None
        with pytest.raises(RoiRejected) as exc:
            roi.freeze_window(clip.frames, lms)
        assert exc.value.frame == 3

    def test_drift_uses_first_frame_rect(self):
        clip = self._clip(drift_px_s=(50.0, 0.0), background_rgb=(0.0, 0.0, 0.0))
        w = roi.freeze_window(clip.frames, clip.landmarks)
        assert w.rect == roi.roi_from_landmarks(clip.landmarks[0])
        assert len({c.shape for c in w.crops}) == 1
        assert not np.array_equal(w.crops[0], w.crops[-1])
        # the programmed drift is 2 px per frame at 25 fps
        np.testing.assert_allclose(clip.landmarks[1] - clip.landmarks[0], [[2.0, 0.0]] * 68)
