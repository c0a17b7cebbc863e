import hashlib

import numpy as np
import pytest

from helpers import make_corpus, tone_bursts
from rirkit.analysis import Label, SegmentMap, measure_snr
from rirkit.audio_io import read_audio, write_audio
from rirkit.augmentation import (AugmentationPlan, ManifestEntry, MixParams, PlanEntry,
                                 SwitchPolicy, build_plan, execute_plan, loop_noise, mix_noise,
                                 mix_noise_verified, read_manifest, reverberate,
                                 reverberate_partitioned, reverberate_switched, solve_alpha,
                                 switch_points, write_manifest)
from rirkit.core import ImpulseResponse, Signal

FS = 16000


def sig(x, fs=FS):
    return Signal(np.asarray(x, dtype=float), fs)


def delta(k, n=None):
    x = np.zeros(n or k + 1)
    x[k] = 1.0
    return sig(x)


class TestReverberate:
    def test_unit_delta(self, rng):
        x = sig(rng.standard_normal(500))
        np.testing.assert_array_equal(reverberate(x, delta(0)).samples, x.samples)

    def test_delayed_delta(self, rng):
        x = sig(rng.standard_normal(500))
        y = reverberate(x, delta(7)).samples
        assert y.size == 507
        np.testing.assert_allclose(y[7:], x.samples, atol=1e-15)
        assert np.all(y[:7] == 0)

    def test_direct_oracle(self, rng):
        x, h = rng.standard_normal(3000), rng.standard_normal(700)
        y = reverberate(sig(x), ImpulseResponse.from_array(h, FS)).samples
        ref = np.array([sum(x[k] * h[n - k] for k in range(max(0, n - 699), min(n, 2999) + 1))
                        for n in range(0, 3699, 37)])
        np.testing.assert_allclose(y[::37], ref, atol=1e-9)

    def test_rate_mismatch(self):
        with pytest.raises(ValueError):
            reverberate(sig(np.ones(5)), Signal(np.ones(2), 8000))


class TestSwitchPolicy:
    @pytest.mark.parametrize("text", ["per-file", "per-seg=3", "in-silence=3.0", "in-silence=1.5"])
    def test_round_trip(self, text):
        assert str(SwitchPolicy.parse(text)) == text

    def test_default_silence(self):
        assert SwitchPolicy.parse("in-silence").min_silence_s == 3.0

    @pytest.mark.parametrize("text", ["per-seg=0", "in-silence=0", "in-silence=-1", "sometimes"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            SwitchPolicy.parse(text)


class TestSwitchPoints:
    seg = SegmentMap(((0, 100, "nonspeech"), (100, 200, "speech"), (200, 260, "nonspeech"),
                      (260, 300, "speech"), (300, 1000, "nonspeech"), (1000, 1100, "speech"),
                      (1100, 1200, "nonspeech")))

    def test_per_file(self):
        assert switch_points(SwitchPolicy.per_file(), None, 1200, FS) == []

    def test_per_segment(self):
        assert switch_points(SwitchPolicy.per_segment(1), self.seg, 1200, FS) == [230, 650]
        assert switch_points(SwitchPolicy.per_segment(2), self.seg, 1200, FS) == [650]
        assert switch_points(SwitchPolicy.per_segment(3), self.seg, 1200, FS) == []

    def test_in_silence(self):
        # Only the 700-sample pause reaches 0.04 s at 16 kHz (640 samples).
        assert switch_points(SwitchPolicy.in_silence(0.04), self.seg, 1200, FS) == [650]
        assert switch_points(SwitchPolicy.in_silence(3.0), self.seg, 1200, FS) == []

    def test_needs_segments(self):
        with pytest.raises(ValueError):
            switch_points(SwitchPolicy.in_silence(), None, 1200, FS)


class TestSwitched:
    def test_single_rir_degenerate(self, rng):
        x, seg = tone_bursts(FS, n_segments=3, speech_s=0.3, pause_s=0.2)
        h = sig(rng.standard_normal(800) * np.exp(-np.arange(800) / 200))
        plain = reverberate(sig(x), h).samples
        for policy in (SwitchPolicy.per_file(), SwitchPolicy.per_segment(1),
                       SwitchPolicy.in_silence(0.1)):
            y = reverberate_switched(sig(x), [h], seg, policy).samples
            np.testing.assert_allclose(y, plain, atol=1e-9 * np.max(np.abs(plain)))

    def test_equal_rirs_degenerate(self, rng):
        x = rng.standard_normal(4000)
        h = sig(rng.standard_normal(600))
        plain = reverberate(sig(x), h).samples
        y = reverberate_partitioned(sig(x), [h, h], [2000]).samples
        np.testing.assert_allclose(y, plain, rtol=0, atol=1e-9 * np.max(np.abs(plain)))

    def test_two_deltas(self, rng):
        x = rng.standard_normal(300)
        y = reverberate_partitioned(sig(x), [delta(0, 6), delta(5, 6)], [100]).samples
        assert y.size == 305
        np.testing.assert_array_equal(y[:100], x[:100])
        np.testing.assert_array_equal(y[105:], x[100:])
        # 100..104: the first RIR's (empty) tail overlaps the delayed partition's start.
        np.testing.assert_array_equal(y[100:105], np.zeros(5))

    def test_energy_of_overlap_region(self, rng):
        x = rng.standard_normal(300)
        h1 = sig(np.r_[1.0, 0.5, 0.25])
        h2 = sig(np.r_[0.0, 0.0, 1.0])
        y = reverberate_partitioned(sig(x), [h1, h2], [100]).samples
        expected = np.zeros(302)
        expected[:102] += np.convolve(x[:100], h1.samples)
        expected[100:] += np.convolve(x[100:], h2.samples)
        np.testing.assert_allclose(y, expected, atol=1e-12)

    def test_cycling(self, rng):
        x = rng.standard_normal(1200)
        seg = TestSwitchPoints.seg
        a, b = delta(0, 3), delta(2, 3)
        y = reverberate_switched(sig(x), [a, b], seg, SwitchPolicy.per_segment(1)).samples
        ref = reverberate_partitioned(sig(x), [a, b, a], [230, 650]).samples
        np.testing.assert_array_equal(y, ref)

    def test_errors(self, rng):
        x = sig(rng.standard_normal(100))
        with pytest.raises(ValueError):
            reverberate_switched(x, [], None, SwitchPolicy.per_file())
        with pytest.raises(ValueError):
            reverberate_partitioned(x, [delta(0)], [50])
        with pytest.raises(ValueError):
            reverberate_partitioned(x, [delta(0), delta(0)], [100])


class TestNoise:
    def test_loop_indexing(self):
        noise = sig(np.arange(10.0))
        np.testing.assert_array_equal(loop_noise(noise, 7, 8), [8, 9, 0, 1, 2, 3, 4])
        np.testing.assert_array_equal(loop_noise(noise, 25, 3), (3 + np.arange(25)) % 10)

    def test_high_snr_near_identity(self, rng):
        x, seg = tone_bursts(FS)
        noise = sig(rng.standard_normal(FS))
        mixed, params = mix_noise_verified(sig(x), noise, MixParams(0.0, 123, 60.0), seg)
        err = np.sum((mixed.samples - x) ** 2) / np.sum(x ** 2)
        assert 10 * np.log10(err) <= -50
        assert measure_snr(mixed, seg) == pytest.approx(60.0, abs=0.5)

    def test_zero_db(self, rng):
        x, seg = tone_bursts(FS)
        noise = sig(rng.standard_normal(FS // 3))
        mixed = mix_noise(sig(x), noise, MixParams(0.0, FS // 3 - 5, 0.0), seg)
        assert measure_snr(mixed, seg) == pytest.approx(0.0, abs=0.5)

    @pytest.mark.parametrize("target", [-10.0, 5.0, 12.5, 20.0, 40.0])
    def test_targets(self, rng, target):
        x, seg = tone_bursts(FS, seed=3)
        noise = sig(rng.standard_normal(FS))
        mixed, params = mix_noise_verified(sig(x), noise, MixParams(0.0, 0, target), seg)
        assert params.alpha > 0
        assert measure_snr(mixed, seg) == pytest.approx(target, abs=0.5)
        np.testing.assert_allclose(mixed.samples, x + params.alpha * loop_noise(noise, x.size, 0))

    def test_closed_form_is_exact(self, rng):
        x, seg = tone_bursts(FS, seed=4)
        looped = rng.standard_normal(x.size)
        alpha = solve_alpha(sig(x), looped, seg, 15.0)
        assert measure_snr(sig(x + alpha * looped), seg) == pytest.approx(15.0, abs=1e-9)

    def test_silent_noise(self):
        x, seg = tone_bursts(FS)
        with pytest.raises(ValueError):
            mix_noise(sig(x), sig(np.zeros(100)), MixParams(0.0, 0, 10.0), seg)

    def test_silent_speech(self, rng):
        x, seg = tone_bursts(FS)
        with pytest.raises(ValueError):
            mix_noise(sig(np.zeros_like(x)), sig(rng.standard_normal(100)),
                      MixParams(0.0, 0, 10.0), seg)

    def test_reverberant_ceiling(self, rng):
        # The reverberant tail in the pauses counts as noise, so the wet
        # speech alone already has a finite SNR that no mixture can exceed.
        from helpers import decaying_rir
        x, seg = tone_bursts(FS, pause_s=0.3)
        wet = reverberate(sig(x), sig(decaying_rir(FS, 0.8, FS, seed=1, level=0.1)))
        ceiling = measure_snr(wet, seg)
        assert ceiling < 20
        with pytest.raises(ValueError, match="exceeds"):
            mix_noise(wet, sig(rng.standard_normal(FS)), MixParams(0.0, 0, ceiling + 1), seg)
        mixed = mix_noise(wet, sig(rng.standard_normal(FS)), MixParams(0.0, 0, ceiling - 3), seg)
        assert measure_snr(mixed, seg) == pytest.approx(ceiling - 3, abs=0.5)

    def test_offset_bounds(self, rng):
        x, seg = tone_bursts(FS)
        with pytest.raises(ValueError):
            mix_noise(sig(x), sig(rng.standard_normal(100)), MixParams(0.0, 100, 10.0), seg)
        with pytest.raises(ValueError):
            MixParams(-1.0, 0, 10.0)

    def test_passivated_energy_bound(self, rng):
        from rirkit.postprocess import passivate
        x = np.clip(rng.standard_normal(8000), -1, 1)
        h, _ = passivate(ImpulseResponse.from_array(5 * rng.standard_normal(200), FS))
        y = reverberate(sig(x), h).samples
        # |H| <= 1 bounds the output power, not the peak; check the power bound.
        assert np.sum(y ** 2) <= np.sum(x ** 2) * (1 + 1e-9)


class TestManifest:
    def test_round_trip(self, tmp_path):
        entries = [ManifestEntry("a", "x/a.wav", "x/a.seg"), ManifestEntry("b", "b.wav")]
        write_manifest(tmp_path / "m.tsv", entries)
        got = read_manifest(tmp_path / "m.tsv")
        assert got == [ManifestEntry("a", str(tmp_path / "x/a.wav"), str(tmp_path / "x/a.seg")),
                       ManifestEntry("b", str(tmp_path / "b.wav"))]

    def test_duplicate(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a\tx.wav\na\ty.wav\n")
        with pytest.raises(ValueError):
            read_manifest(tmp_path / "m.tsv")


def _manifests(root, **kw):
    return [read_manifest(p) for p in make_corpus(root, **kw)]


class TestPlan:
    def test_deterministic(self, tmp_path):
        corpus, rirs, noises = _manifests(tmp_path)
        a = build_plan(corpus, rirs, noises, (10, 20), SwitchPolicy.per_segment(1), seed=7)
        b = build_plan(corpus, rirs, noises, (10, 20), SwitchPolicy.per_segment(1), seed=7)
        c = build_plan(corpus, rirs, noises, (10, 20), SwitchPolicy.per_segment(1), seed=8)
        assert a.to_text() == b.to_text()
        assert a.to_text() != c.to_text()

    def test_text_round_trip(self, tmp_path):
        corpus, rirs, noises = _manifests(tmp_path)
        plan = build_plan(corpus, rirs, noises, (10, 20), SwitchPolicy.in_silence(0.2), seed=1)
        plan.save(tmp_path / "plan.txt")
        again = AugmentationPlan.load(tmp_path / "plan.txt")
        assert again == plan
        assert again.to_text() == plan.to_text()

    def test_header(self, tmp_path):
        corpus, rirs, noises = _manifests(tmp_path)
        text = build_plan(corpus, rirs, noises, (10, 20), SwitchPolicy.per_file(), 3).to_text()
        assert text.splitlines()[0] == ("#rirkit-plan\tversion=1\trng=PCG64\tseed=3"
                                        "\tpolicy=per-file\tsnr=10.0:20.0")

    def test_bad_header(self):
        with pytest.raises(ValueError):
            AugmentationPlan.from_text("utt\tr@0\tn\t0\t10.0\t1\n")
        with pytest.raises(ValueError):
            AugmentationPlan.from_text("#rirkit-plan\tversion=9\trng=PCG64\tseed=1"
                                       "\tpolicy=per-file\tsnr=1:2\n")

    def test_snr_statistics(self, tmp_path):
        # 10 000 entries sharing one audio file keep the fixture small.
        write_audio(tmp_path / "u.wav", sig(np.ones(10)))
        write_audio(tmp_path / "n.wav", sig(np.ones(1000)))
        corpus = [ManifestEntry(f"u{i}", str(tmp_path / "u.wav")) for i in range(10_000)]
        plan = build_plan(corpus, [ManifestEntry("r", "unused")],
                          [ManifestEntry("n", str(tmp_path / "n.wav"))],
                          (10, 20), SwitchPolicy.per_file(), seed=2024)
        snr = np.array([e.target_snr_db for e in plan.entries])
        assert snr.mean() == pytest.approx(15.0, abs=0.2)
        assert snr.min() >= 10 and snr.max() <= 20
        offsets = np.array([e.offset for e in plan.entries])
        assert offsets.min() >= 0 and offsets.max() < 1000

    def test_balanced(self, tmp_path):
        write_audio(tmp_path / "u.wav", sig(np.ones(10)))
        corpus = [ManifestEntry(f"u{i}", str(tmp_path / "u.wav")) for i in range(10)]
        rirs = [ManifestEntry(f"r{i}", "unused") for i in range(3)]
        for seed in range(5):
            plan = build_plan(corpus, rirs, [ManifestEntry("n", str(tmp_path / "u.wav"))],
                              (10, 20), SwitchPolicy.per_file(), seed)
            counts = [sum(e.rir_ids == (r.id,) for e in plan.entries) for r in rirs]
            assert sorted(counts) == [3, 3, 4]

    def test_fixed_snr(self, tmp_path):
        write_audio(tmp_path / "u.wav", sig(np.ones(10)))
        plan = build_plan([ManifestEntry("u", str(tmp_path / "u.wav"))], [ManifestEntry("r", "x")],
                          [ManifestEntry("n", str(tmp_path / "u.wav"))], (12, 12),
                          SwitchPolicy.per_file(), 0)
        assert plan.entries[0].target_snr_db == 12.0

    def test_errors(self, tmp_path):
        with pytest.raises(ValueError):
            build_plan([], [ManifestEntry("r", "x")], [ManifestEntry("n", "x")], (10, 20),
                       SwitchPolicy.per_file(), 0)
        write_audio(tmp_path / "u.wav", sig(np.ones(10)))
        u = [ManifestEntry("u", str(tmp_path / "u.wav"))]
        with pytest.raises(ValueError):
            build_plan(u, [ManifestEntry("r", "x")], u, (20, 10), SwitchPolicy.per_file(), 0)

    def test_entry_validation(self):
        with pytest.raises(ValueError):
            PlanEntry("u", ("a", "b"), (0,), "n", 0, 10.0, 1)
        with pytest.raises(ValueError):
            PlanEntry("u", ("a",), (5,), "n", 0, 10.0, 1)


def _digests(outdir):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(outdir.iterdir())}


class TestExecute:
    def test_empty_plan(self, tmp_path):
        report = execute_plan(AugmentationPlan((), seed=0), tmp_path / "out")
        assert report.ok and not report.outputs
        assert report.provenance.read_text().startswith("#rirkit-plan-provenance")

    def test_delta_high_snr(self, tmp_path, rng):
        x, seg = tone_bursts(FS, n_segments=2)
        write_audio(tmp_path / "u.wav", sig(x), "float64")
        (tmp_path / "u.seg").write_text(seg.to_text(FS))
        write_audio(tmp_path / "d.wav", sig([1.0]), "float64")
        write_audio(tmp_path / "n.wav", sig(rng.standard_normal(FS)), "float64")
        plan = AugmentationPlan(
            (PlanEntry("u", ("d",), (0,), "n", 17, 60.0, 1),), seed=0,
            utterances=(ManifestEntry("u", str(tmp_path / "u.wav"), str(tmp_path / "u.seg")),),
            rirs=(ManifestEntry("d", str(tmp_path / "d.wav")),),
            noises=(ManifestEntry("n", str(tmp_path / "n.wav")),))
        report = execute_plan(plan, tmp_path / "out")
        assert report.ok
        y = read_audio(report.outputs["u"]).samples
        err = np.sum((y - x) ** 2) / np.sum(x ** 2)
        assert 10 * np.log10(err) <= -50
        assert report.realized_snr["u"] == pytest.approx(60.0, abs=0.5)

    def test_rerun_identical(self, tmp_path):
        corpus, rirs, noises = _manifests(tmp_path / "data", n_utts=4)
        plan = build_plan(corpus, rirs, noises, (10, 20), SwitchPolicy.per_segment(1), seed=5)
        a = execute_plan(plan, tmp_path / "a")
        b = execute_plan(plan, tmp_path / "b")
        assert a.ok and b.ok
        assert _digests(tmp_path / "a") == _digests(tmp_path / "b")
        for e in plan.entries:
            assert a.realized_snr[e.utt_id] == pytest.approx(e.target_snr_db, abs=0.5)
        # Reverberation tails are kept.
        y = read_audio(a.outputs[plan.entries[0].utt_id])
        x = read_audio(corpus[0].path)
        assert len(y) > len(x)

    def test_failure_recorded(self, tmp_path):
        corpus, rirs, noises = _manifests(tmp_path / "data", n_utts=3)
        (tmp_path / "data" / "utt" / "u001.wav").unlink()
        plan = build_plan(corpus[:1] + corpus[2:], rirs, noises, (10, 20),
                          SwitchPolicy.per_file(), seed=5)
        plan = AugmentationPlan(
            plan.entries + (PlanEntry("u001", ("r0",), (0,), "n0", 0, 15.0, 9),), plan.seed,
            plan.policy, plan.snr_range, tuple(corpus), plan.rirs, plan.noises)
        report = execute_plan(plan, tmp_path / "out")
        assert not report.ok
        assert set(report.failures) == {"u001"}
        assert set(report.outputs) == {"u000", "u002"}
        lines = report.provenance.read_text().splitlines()
        assert len(lines) == 4
        assert lines[-1].split("\t")[6] == "FAILED"
