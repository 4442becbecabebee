import numpy as np
import pytest

from oracles import brute_mean, dft_matrix
from rppgnet import featex, ingest, roi, synth
from rppgnet.synth import HrTimeline, SynthSpec

QUIET = dict(noise_sigma=0.0, drift_px_s=(0.0, 0.0))


def _roi_means(clip):
    rect = roi.roi_from_landmarks(clip.landmarks[0])
    crops = clip.frames[:, rect.y:rect.y + rect.height, rect.x:rect.x + rect.width].astype(np.float64)
    return crops.mean(axis=(1, 2))


class TestHrTimeline:
    def test_constant_cycles(self):
        assert HrTimeline.constant(90).cycles(2.0) == pytest.approx(3.0)

    def test_sweep_cycles_closed_form(self):
        tl = HrTimeline.sweep(60, 120, 10)
        t = np.linspace(0, 10, 11)
        # bpm(t) = 60 + 6 t  =>  beats = t + t^2 / 20
        np.testing.assert_allclose(tl.cycles(t), t + t ** 2 / 20, rtol=1e-12)

    def test_step(self):
        tl = HrTimeline.step(80, 110, 5, 10)
        assert tl.bpm(4.99) == 80 and tl.bpm(5.0) == 110
        assert tl.cycles(10.0) == pytest.approx(5 * 80 / 60 + 5 * 110 / 60)

    def test_cycles_match_numeric_integral(self):
        tl = HrTimeline((0.0, 2.0, 2.0, 5.0, 9.0), (60.0, 90.0, 70.0, 150.0, 100.0))
        t = np.linspace(0, 9, 90001)
        hz = tl.bpm(t) / 60
        numeric = np.concatenate([[0], np.cumsum((hz[1:] + hz[:-1]) / 2 * np.diff(t))])
        np.testing.assert_allclose(tl.cycles(t[::1000]), numeric[::1000], atol=1e-4)

    @pytest.mark.parametrize("bpms", [(40.0,), (250.0,), (60.0, 300.0)])
    def test_envelope(self, bpms):
        with pytest.raises(ValueError):
            HrTimeline(tuple(float(i) for i in range(len(bpms))), bpms)


class TestGenerate:
    def test_90bpm_spectrum_matches_dft_oracle(self):
        spec = SynthSpec(duration_s=3, hr=HrTimeline.constant(90), phase=0.3, **QUIET)
        green = _roi_means(synth.render(spec))[:, 1]
        t = np.arange(25) / 25
        fmat = dft_matrix(25)
        for s in range(3):
            seg = green[s * 25:(s + 1) * 25]
            mag = np.abs(fmat @ (seg - seg.mean()))[:13]
            expected_sig = 1.2 * np.sin(2 * np.pi * 1.5 * (t + s) + 0.3)
            expected = np.abs(fmat @ (expected_sig - expected_sig.mean()))[:13]
            assert np.argmax(mag) in (1, 2)
            np.testing.assert_allclose(mag, expected, atol=1e-3)

    def test_zero_amplitude_gives_zero_features(self):
        spec = SynthSpec(duration_s=2, amplitude=(0.0, 0.0, 0.0), **QUIET)
        for w in ingest.windows(synth.render(spec)):
            np.testing.assert_allclose(featex.extract(w.roi_window.crops), 0.0, atol=1e-9)

    @pytest.mark.parametrize("float_frames", [True, False])
    def test_byte_identical(self, tmp_path, float_frames):
        spec = SynthSpec(duration_s=1, frame_size=(32, 32), float_frames=float_frames, seed=5, gt_rate=50)
        a = synth.generate(spec, tmp_path / "a")
        b = synth.generate(spec, tmp_path / "b")
        for pa in sorted(p for p in (tmp_path / "a").rglob("*") if p.is_file()):
            pb = tmp_path / "b" / pa.relative_to(tmp_path / "a")
            assert pa.read_bytes() == pb.read_bytes()
        assert a.fps == b.fps

    def test_seed_changes_noise(self):
        a = synth.render(SynthSpec(duration_s=1, seed=1)).frames
        b = synth.render(SynthSpec(duration_s=1, seed=2)).frames
        assert not np.array_equal(a, b)

    def test_roi_lies_in_modulated_region(self):
        spec = SynthSpec(duration_s=1)
        rect = roi.roi_from_landmarks(synth.landmark_template(spec.frame_size))
        mask = synth.face_mask(spec.frame_size)
        assert mask[rect.y:rect.y + rect.height, rect.x:rect.x + rect.width].all()

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            synth.generate(SynthSpec(duration_s=1), blocker)


class TestOracleConsistency:
    def test_float_frames(self):
        spec = SynthSpec(duration_s=2, hr=HrTimeline.sweep(60, 100, 2), **QUIET)
        clip = synth.render(spec)
        t = np.arange(spec.n_frames) / spec.fps
        expected = np.asarray(spec.base_rgb) + synth.pulse_signal(spec, t)
        # float32 frames: ~170 carries about 8e-6 of storage rounding
        np.testing.assert_allclose(_roi_means(clip), expected, rtol=1e-6)

    def test_8bit_frames(self):
        spec = SynthSpec(duration_s=2, float_frames=False, amplitude=(2.0, 3.0, 1.5), **QUIET)
        clip = synth.render(spec)
        t = np.arange(spec.n_frames) / spec.fps
        expected = np.asarray(spec.base_rgb) + synth.pulse_signal(spec, t)
        err = np.abs(_roi_means(clip) - expected)
        assert err.max() <= 0.5 + 1e-12  # half an 8-bit step
        assert err.max() / 255 <= 1 / 255

    def test_labels_equal_programmed_mean(self, tmp_path):
        spec = SynthSpec(duration_s=3, frame_size=(32, 32), hr=HrTimeline.step(70, 95, 1.5, 3))
        entry = synth.generate(spec, tmp_path)
        gt = ingest.load_ground_truth(entry.gt_path, entry.gt_rate)
        for s in range(3):
            t = np.arange(s * 1000, (s + 1) * 1000) / 1000
            ref = brute_mean(spec.hr.bpm(t).tolist())
            assert ingest.label_for_second(gt, s) == pytest.approx(ref, abs=1e-9)


class TestCorpus:
    def test_200_uniform(self):
        specs = synth.corpus_specs(200, (60, 120), seed=3)
        bpms = [s.hr.bpms[0] for s in specs]
        assert len(specs) == 200
        assert 60 <= min(bpms) and max(bpms) <= 120
        rep = synth.coverage_report(bpms, (60, 120))
        assert sum(rep["counts"]) == 200
        # 99.9% point of chi-square with 5 degrees of freedom
        assert rep["chi2"] < 20.52

    def test_written_manifest(self, tmp_path):
        tpl = SynthSpec(duration_s=1, frame_size=(24, 24), gt_rate=20)
        path, rep = synth.make_training_corpus(3, (60, 120), tmp_path, template=tpl, seed=1)
        assert len(ingest.load_manifest(path).entries) == 3
        assert sum(rep["counts"]) == 3

    def test_single_clip(self):
        assert len(synth.corpus_specs(1, (60, 120))) == 1

    def test_degenerate_range(self):
        specs = synth.corpus_specs(5, (80, 80))
        assert all(s.hr.bpms == (80,) for s in specs)

    @pytest.mark.parametrize("n,rng_", [(0, (60, 120)), (3, (120, 60))])
    def test_errors(self, n, rng_):
        with pytest.raises(ValueError):
            synth.corpus_specs(n, rng_)

    def test_clips_independent_of_count(self):
        a = synth.corpus_specs(5, (60, 120), seed=9)
        b = synth.corpus_specs(10, (60, 120), seed=9)
        assert a == b[:5]
