import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_pyr_down, dense_pyr_down_loops, dft_matrix, reference_bandpass
from rppgnet import featex
from rppgnet.featex import FeatureConfig

CFG = FeatureConfig()
T = np.arange(25) / 25.0


class TestConfig:
    def test_defaults(self):
        assert (CFG.pyramid_level, CFG.fps, CFG.f_low, CFG.f_high) == (4, 25, 0.75, 4.0)
        assert CFG.pre_resize == (80, 80)
        assert CFG.shape == (25, 25, 3)

    @pytest.mark.parametrize("kwargs", [
        dict(f_low=0.0), dict(f_low=5.0, f_high=4.0), dict(f_high=13.0),
        dict(pre_resize=(81, 80)), dict(pre_resize=(96, 80)),
    ])
    def test_rejects_bad_config(self, kwargs):
        with pytest.raises(ValueError):
            FeatureConfig(**kwargs)


class TestGaussianDownsample:
    @pytest.mark.parametrize("shape", [(2, 2, 3), (8, 8, 3), (80, 80, 3), (6, 10, 3)])
    def test_constant_preserved(self, shape):
        img = np.full(shape, 137.0)
        out = featex.gaussian_downsample(img)
        assert out.shape == (shape[0] // 2, shape[1] // 2, 3)
        assert np.all(out == 137.0)

    def test_ramp_matches_dense_oracle(self):
        yy, xx = np.mgrid[0:8, 0:8]
        img = np.stack([xx + 2.0 * yy, 3.0 * xx - yy, xx * yy / 7.0], axis=-1)
        np.testing.assert_allclose(featex.gaussian_downsample(img), dense_pyr_down(img), atol=1e-6)

    def test_random_matches_dense_oracle(self, rng):
        img = rng.uniform(0, 255, size=(16, 12, 3))
        np.testing.assert_allclose(featex.gaussian_downsample(img), dense_pyr_down(img), atol=1e-9)

    def test_oracles_agree(self, rng):
        img = rng.uniform(0, 255, size=(10, 14, 3))
        np.testing.assert_allclose(dense_pyr_down(img), dense_pyr_down_loops(img), atol=1e-12)

    def test_four_levels_reach_5x5(self, rng):
        x = rng.uniform(0, 255, size=(80, 80, 3))
        for _ in range(4):
            x = featex.gaussian_downsample(x)
        assert x.shape == (5, 5, 3)

    def test_odd_dimensions_rejected(self):
        with pytest.raises(ValueError):
            featex.gaussian_downsample(np.zeros((5, 4, 3)))


class TestColumns:
    def test_row_major(self):
        img = np.array([[[1], [2]], [[3], [4]]], dtype=float)
        assert featex.to_column(img)[:, 0].tolist() == [1, 2, 3, 4]

    def test_5x5_gives_25_rows(self, rng):
        assert featex.to_column(rng.random((5, 5, 3))).shape == (25, 3)

    def test_inverse(self, rng):
        img = rng.random((5, 5, 3))
        assert np.array_equal(featex.from_column(featex.to_column(img), 5, 5), img)

    def test_concat_shape(self, rng):
        cols = [rng.random((25, 3)) for _ in range(25)]
        m = featex.concat_columns(cols, 25)
        assert m.shape == (25, 25, 3)
        assert np.array_equal(m[:, 7], cols[7])

    def test_concat_wrong_count(self, rng):
        with pytest.raises(ValueError):
            featex.concat_columns([rng.random((25, 3)) for _ in range(24)], 25)

    def test_concat_ragged(self, rng):
        cols = [rng.random((25, 3)) for _ in range(24)] + [rng.random((24, 3))]
        with pytest.raises(ValueError):
            featex.concat_columns(cols, 25)

    def test_permutation_permutes_columns(self, rng):
        cols = [rng.random((25, 3)) for _ in range(25)]
        perm = rng.permutation(25)
        m = featex.concat_columns(cols, 25)
        mp = featex.concat_columns([cols[i] for i in perm], 25)
        assert np.array_equal(mp, m[:, perm])


def _row_image(row):
    """One-row (1, 25, 3) image with the same trace in every channel."""
    return np.repeat(np.asarray(row, dtype=float)[None, :, None], 3, axis=2)


class TestBandpass:
    def test_mask_keeps_1_to_4_hz(self):
        mask = featex.band_mask(25, 25, 0.75, 4.0)
        kept = sorted({abs(k if k <= 12 else k - 25) for k in np.flatnonzero(mask)})
        assert kept == [1, 2, 3, 4]
        assert mask.sum() == 8

    def test_2hz_cosine_unchanged(self):
        row = np.cos(2 * np.pi * 2 * T)
        # oracle: the 2 Hz line sits exactly in DFT bin 2 for N = 25, fs = 25
        spec = dft_matrix(25) @ row
        assert np.argmax(np.abs(spec[:13])) == 2
        out = featex.bandpass_rows(_row_image(row), CFG)
        np.testing.assert_allclose(out[0, :, 1], row, rtol=1e-9, atol=1e-12)

    def test_dc_removed(self):
        out = featex.bandpass_rows(_row_image(np.full(25, 42.0)), CFG)
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_mixture_keeps_only_in_band(self):
        two = np.cos(2 * np.pi * 2 * T)
        row = two + 5.0 + 0.7 * np.cos(2 * np.pi * 6 * T)
        out = featex.bandpass_rows(_row_image(row), CFG)
        np.testing.assert_allclose(out[0, :, 0], two, atol=1e-9)

    def test_matches_reference_dft(self, rng):
        m = rng.standard_normal((25, 25, 3))
        out = featex.bandpass_rows(m, CFG)
        for r in (0, 11, 24):
            for c in range(3):
                ref = reference_bandpass(m[r, :, c], 25, 0.75, 4.0)
                np.testing.assert_allclose(out[r, :, c], ref, atol=1e-9)

    def test_parseval(self, rng):
        m = rng.standard_normal((25, 25, 3))
        out = featex.bandpass_rows(m, CFG)
        spec = np.fft.fft(m, axis=1)
        mask = featex.band_mask(25, 25, 0.75, 4.0)
        kept = np.sum(np.abs(spec[:, mask]) ** 2, axis=1) / 25
        energy = np.sum(out ** 2, axis=1)
        np.testing.assert_allclose(energy, kept, rtol=1e-9)

    def test_idempotent(self, rng):
        m = rng.standard_normal((25, 25, 3))
        once = featex.bandpass_rows(m, CFG)
        np.testing.assert_allclose(featex.bandpass_rows(once, CFG), once, atol=1e-9)

    def test_real_output(self, rng):
        _, imag = featex.bandpass_rows(rng.standard_normal((25, 25, 3)) * 100, CFG, return_imag=True)
        assert np.max(np.abs(imag)) < 1e-9

    @pytest.mark.parametrize("f", range(13))
    @pytest.mark.parametrize("wave", [np.cos, np.sin])
    def test_frequency_sweep(self, f, wave):
        row = wave(2 * np.pi * f * T)
        if not np.any(row):
            pytest.skip("sin at 0 Hz is identically zero")
        out = featex.bandpass_rows(_row_image(row), CFG)[0, :, 0]
        if 1 <= f <= 4:
            np.testing.assert_allclose(out, row, rtol=1e-9, atol=1e-12)
        else:
            assert np.sum(out ** 2) < 1e-9 * np.sum(row ** 2)

    def test_nonfinite_rejected(self):
        m = np.zeros((25, 25, 3))
        m[3, 4, 1] = np.nan
        with pytest.raises(ValueError):
            featex.bandpass_rows(m, CFG)


def _window(green_hz=1.5, amp=2.0, size=(30, 40)):
    sig = amp * np.sin(2 * np.pi * green_hz * T)
    crops = np.full((25,) + size + (3,), 100.0)
    crops[..., 1] += sig[:, None, None]
    return crops, sig


class TestExtract:
    def test_uniform_green_pulse(self):
        crops, sig = _window()
        fim = featex.extract(crops, CFG)
        expected = reference_bandpass(sig, 25, 0.75, 4.0)
        for r in range(25):
            np.testing.assert_allclose(fim[r, :, 1], expected, atol=1e-6)
        np.testing.assert_allclose(fim[:, :, [0, 2]], 0.0, atol=1e-9)

    def test_static_window_is_zero(self, rng):
        crops = np.repeat(rng.uniform(0, 255, size=(1, 24, 31, 3)), 25, axis=0)
        np.testing.assert_allclose(featex.extract(crops, CFG), 0.0, atol=1e-9)

    def test_shape(self, rng):
        assert featex.extract(rng.uniform(0, 255, (25, 37, 53, 3)), CFG).shape == (25, 25, 3)

    def test_uint8_input(self, rng):
        crops = rng.integers(0, 256, (25, 20, 20, 3), dtype=np.uint8)
        assert np.all(np.isfinite(featex.extract(crops, CFG)))

    def test_other_frame_rates_resampled(self):
        t30 = np.arange(30) / 30
        crops = np.full((30, 16, 16, 3), 50.0)
        crops[..., 1] += np.cos(2 * np.pi * 2 * t30)[:, None, None]
        fim = featex.extract(crops, CFG)
        assert fim.shape == (25, 25, 3)
        # linear interpolation of a 2 Hz cosine stays close to the 2 Hz cosine
        np.testing.assert_allclose(fim[0, :, 1], np.cos(2 * np.pi * 2 * T), atol=0.05)

    def test_linearity(self, rng):
        w1 = rng.uniform(0, 255, (25, 24, 32, 3))
        w2 = rng.uniform(0, 255, (25, 24, 32, 3))
        a, b = 0.7, -1.9
        lhs = featex.extract(a * w1 + b * w2, CFG)
        rhs = a * featex.extract(w1, CFG) + b * featex.extract(w2, CFG)
        np.testing.assert_allclose(lhs, rhs, atol=1e-6)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 60), st.integers(2, 60))
    def test_resize_preserves_constants(self, h, w):
        out = featex.resize_bilinear(np.full((1, h, w, 3), 9.5), (80, 80))
        np.testing.assert_allclose(out, 9.5, rtol=1e-12)


class TestFimFile:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        img = rng.standard_normal((25, 25, 3)).astype(np.float32)
        p = tmp_path / "a.fim"
        featex.write_fim(p, img)
        back = featex.read_fim(p)
        assert back.dtype == np.float32 and np.array_equal(back, img)
        featex.write_fim(tmp_path / "b.fim", back)
        assert p.read_bytes() == (tmp_path / "b.fim").read_bytes()

    def test_layout(self, tmp_path):
        img = np.arange(2 * 3 * 3, dtype=np.float32).reshape(2, 3, 3)
        p = tmp_path / "x.fim"
        featex.write_fim(p, img)
        data = p.read_bytes()
        assert data[:4] == b"FIM1"
        assert np.frombuffer(data[4:16], "<u4").tolist() == [2, 3, 3]
        planes = np.frombuffer(data[16:], "<f4")
        # channel-major planes, row-major inside a plane
        assert planes[:6].tolist() == img[:, :, 0].ravel().tolist()
        assert planes[6:12].tolist() == img[:, :, 1].ravel().tolist()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.fim"
        p.write_bytes(b"NOPE" + bytes(12))
        with pytest.raises(ValueError):
            featex.read_fim(p)

    def test_labels_csv(self, tmp_path):
        rows = [(tmp_path / "a.fim", 71.25), (tmp_path / "b.fim", 99.0)]
        featex.write_labels(tmp_path / "labels.csv", rows)
        assert featex.read_labels(tmp_path / "labels.csv") == rows
