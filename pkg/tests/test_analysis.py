import math

import numpy as np
import pytest

from rirkit.analysis import (DECAY_FLOOR_DB, InsufficientDecay, Label, SegmentMap,
                             a_weight, a_weighting_db, a_weighting_fir, a_weighting_response_db,
                             estimate_rt30, measure_snr, schroeder_decay, snr_from_powers)
from rirkit.chain import exponential_rir
from rirkit.core import ImpulseResponse, Signal

FS = 16000


def exp_noise(rt60, fs=FS, seconds=None, seed=0):
    """White noise under an exact exponential envelope with the given RT60."""
    seconds = seconds or 1.5 * rt60
    n = int(seconds * fs)
    t = np.arange(n) / fs
    return np.random.default_rng(seed).standard_normal(n) * 10 ** (-3 * t / rt60)


class TestSchroeder:
    def test_delta(self):
        d = schroeder_decay(np.r_[1.0, np.zeros(9)], FS)
        assert d.values[0] == 0.0
        assert np.all(d.values[1:] == DECAY_FLOOR_DB)

    def test_two_equal_deltas(self):
        d = schroeder_decay(np.r_[1.0, 0, 0, 1.0, 0], FS).values
        assert d[1] == pytest.approx(-10 * math.log10(2), abs=1e-12)
        assert d[3] == pytest.approx(-3.0103, abs=1e-4)

    def test_pure_exponential_slope(self):
        # Energy decays by 10**(-6 t / rt); with infinite support the
        # backward integral keeps exactly the same slope.
        rt = 0.5
        n = 20 * FS
        t = np.arange(n) / FS
        h = 10 ** (-3 * t / rt)
        d = schroeder_decay(h, FS).values
        k = FS // 10
        assert d[k] == pytest.approx(-60 * 0.1 / rt, abs=1e-6)

    def test_monotone_and_scale_invariant(self, rng):
        h = rng.standard_normal(4000) * np.exp(-np.arange(4000) / 500)
        a = schroeder_decay(h, FS).values
        b = schroeder_decay(1e-6 * h, FS).values
        assert np.all(np.diff(a) <= 0)
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_accepts_impulse_response(self):
        ir = ImpulseResponse.from_array(np.r_[1.0, 0.5, 0.25], FS)
        np.testing.assert_allclose(schroeder_decay(ir).values,
                                   schroeder_decay(ir.samples, FS).values)

    def test_rejects_silence(self):
        with pytest.raises(ValueError):
            schroeder_decay(np.zeros(10), FS)


class TestRt30:
    @pytest.mark.parametrize("rt", [0.2, 0.78, 1.85])
    def test_exponential_noise(self, rt):
        est = estimate_rt30(schroeder_decay(exp_noise(rt, seconds=1.2 * rt), FS))
        assert est == pytest.approx(rt, rel=0.05)

    def test_deterministic_exponential(self):
        t = np.arange(3 * FS) / FS
        est = estimate_rt30(schroeder_decay(10 ** (-3 * t / 0.6), FS))
        assert est == pytest.approx(0.6, rel=1e-3)

    def test_delta_has_no_decay(self):
        with pytest.raises(InsufficientDecay):
            estimate_rt30(schroeder_decay(np.r_[1.0, np.zeros(99)], FS))

    def test_shallow_decay(self):
        t = np.arange(FS // 10) / FS
        with pytest.raises(InsufficientDecay):
            estimate_rt30(schroeder_decay(10 ** (-3 * t / 5.0), FS))

    def test_synthetic_rir(self):
        h = exponential_rir(0.5, FS, FS, seed=3)
        assert estimate_rt30(schroeder_decay(h)) == pytest.approx(0.5, rel=0.1)


def tone(freq, fs, seconds=2.0):
    t = np.arange(int(seconds * fs)) / fs
    return Signal(np.sin(2 * np.pi * freq * t), fs)


def gain_db(x: Signal, y: Signal, trim: int) -> float:
    a, b = x.samples[trim:-trim], y.samples[trim:-trim]
    return 10 * math.log10(np.mean(b ** 2) / np.mean(a ** 2))


class TestAWeighting:
    @pytest.mark.parametrize("f,expected", [(1000, 0.0), (100, -19.1), (2000, 1.2),
                                            (500, -3.2), (4000, 1.0), (250, -8.6)])
    def test_analytic_curve(self, f, expected):
        assert float(a_weighting_db(f)) == pytest.approx(expected, abs=0.1)

    @pytest.mark.parametrize("fs", [16000, 48000])
    @pytest.mark.parametrize("f", [100, 1000, 2000])
    def test_tone_gain(self, fs, f):
        x = tone(f, fs)
        assert gain_db(x, a_weight(x), fs // 4) == pytest.approx(float(a_weighting_db(f)), abs=0.2)

    @pytest.mark.parametrize("fs", [8000, 16000, 44100, 48000])
    def test_response_tracks_curve(self, fs):
        f = np.array([63, 100, 200, 500, 1000, 2000, 3000, 3900])
        np.testing.assert_allclose(a_weighting_response_db(fs, f), a_weighting_db(f), atol=0.05)

    def test_zero_phase(self):
        x = np.zeros(FS)
        x[FS // 2] = 1.0
        y = a_weight(Signal(x, FS)).samples
        np.testing.assert_allclose(y, y[::-1][np.r_[FS - 1, 0:FS - 1]], atol=1e-15)

    def test_low_rate_rejected(self):
        with pytest.raises(ValueError):
            a_weighting_fir(4000)

    def test_empty(self):
        assert len(a_weight(Signal(np.zeros(0), FS))) == 0


def segmap(n_noise, n_speech):
    return SegmentMap(((0, n_noise, "nonspeech"), (n_noise, n_noise + n_speech, "speech")))


class TestSnr:
    def test_from_powers(self):
        assert snr_from_powers(2.0, 1.0) == pytest.approx(0.0)
        assert snr_from_powers(11.0, 1.0) == pytest.approx(10.0)
        assert snr_from_powers(1.0, 0.0) == 60.0
        assert snr_from_powers(1.0, 1e-12) == 60.0
        assert snr_from_powers(0.5, 1.0) == -30.0

    def test_noiseless_capped(self):
        y = tone(1000, FS, 1.0).samples.copy()
        ramp = np.hanning(160)
        y[:80] *= ramp[:80]
        y[-80:] *= ramp[80:]
        x = np.r_[np.zeros(FS), y]
        assert measure_snr(Signal(x, FS), segmap(FS, FS)) == 60.0

    def test_hard_onset_leak_is_small(self):
        # A zero-phase filter spreads an abrupt onset slightly into the
        # preceding silence; the effect stays far below usable SNRs.
        x = np.r_[np.zeros(FS), tone(1000, FS, 1.0).samples]
        assert measure_snr(Signal(x, FS), segmap(FS, FS)) > 45.0

    def test_zero_db(self, rng):
        # Equal-power noise throughout plus a speech tone of matching A-weighted power.
        n = FS
        noise = rng.standard_normal(2 * n) * 0.1
        sig = np.r_[np.zeros(n), tone(1000, FS, 1.0).samples]
        w_noise = np.mean(a_weight(Signal(noise, FS)).samples[n // 4:n - n // 4] ** 2)
        sig *= math.sqrt(w_noise / 0.5)
        snr = measure_snr(Signal(sig + noise, FS), segmap(n, n))
        assert snr == pytest.approx(0.0, abs=0.5)

    def test_noise_only_floor(self, rng):
        x = rng.standard_normal(2 * FS) * np.r_[np.ones(FS), 0.5 * np.ones(FS)]
        assert measure_snr(Signal(x, FS), segmap(FS, FS)) == -30.0

    def test_missing_label(self):
        m = SegmentMap(((0, 100, "speech"),))
        with pytest.raises(ValueError):
            measure_snr(Signal(np.ones(100), FS), m)


class TestSegmentMap:
    def test_parse_round_trip(self):
        text = "0.0\t0.5\tnonspeech\n0.5\t1.25\tspeech\n# comment\n1.25 2.0 nonspeech\n"
        m = SegmentMap.from_text(text, FS)
        assert [(iv.start, iv.end, iv.label) for iv in m.intervals] == [
            (0, 8000, Label.NONSPEECH), (8000, 20000, Label.SPEECH), (20000, 32000, Label.NONSPEECH)]
        assert SegmentMap.from_text(m.to_text(FS), FS) == m
        assert m.end == 32000
        assert m.mask(Label.SPEECH, 32000).sum() == 12000

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            SegmentMap(((0, 10, "speech"), (5, 20, "nonspeech")))

    def test_bad_label(self):
        with pytest.raises(ValueError):
            SegmentMap.from_text("0\t1\tmusic\n", FS)

    def test_bad_fields(self):
        with pytest.raises(ValueError):
            SegmentMap.from_text("0\t1\n", FS)
