"""Acoustic measures: Schroeder decay, RT30, A-weighting and segment SNR."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.signal

from .core import ImpulseResponse, Signal

DECAY_FLOOR_DB = -120.0
SNR_CAP_DB = 60.0
SNR_FLOOR_DB = -30.0


class InsufficientDecay(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DecayCurve:
    values: np.ndarray
    sample_rate: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) / self.sample_rate


class Label(str, enum.Enum):
    SPEECH = "speech"
    NONSPEECH = "nonspeech"


@dataclass(frozen=True)
class Interval:
    start: int
    end: int
    label: Label

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SegmentMap:
    """Sorted, non-overlapping labelled sample intervals ``[start, end)``."""

    intervals: tuple[Interval, ...]

    def __post_init__(self):
        ivs = tuple(
            iv if isinstance(iv, Interval) else Interval(int(iv[0]), int(iv[1]), Label(iv[2]))
            for iv in self.intervals)
        prev_end = 0
        for iv in ivs:
            if iv.start < prev_end or iv.end <= iv.start:
                raise ValueError(f"intervals must be sorted, non-empty and disjoint at {iv}")
            prev_end = iv.end
        object.__setattr__(self, "intervals", ivs)

    def of(self, label: Label) -> list[Interval]:
        return [iv for iv in self.intervals if iv.label == label]

    @property
    def end(self) -> int:
        return self.intervals[-1].end if self.intervals else 0

    def mask(self, label: Label, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        for iv in self.of(label):
            m[iv.start:min(iv.end, n)] = True
        return m

    @classmethod
    def from_text(cls, text: str, sample_rate: int) -> "SegmentMap":
        """Parse ``start_s<TAB>end_s<TAB>label`` lines."""
        ivs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 3 fields, got {len(parts)}")
            start, end = (int(round(float(v) * sample_rate)) for v in parts[:2])
            ivs.append(Interval(start, end, Label(parts[2])))
        return cls(tuple(ivs))

    @classmethod
    def read(cls, path, sample_rate: int) -> "SegmentMap":
        return cls.from_text(Path(path).read_text(), sample_rate)

    def to_text(self, sample_rate: int) -> str:
        return "".join(f"{iv.start / sample_rate:.6f}\t{iv.end / sample_rate:.6f}\t{iv.label.value}\n"
                       for iv in self.intervals)


def schroeder_decay(rir: ImpulseResponse | Signal | np.ndarray, sample_rate: int | None = None
                    ) -> DecayCurve:
    """Backward-integrated energy decay in dB, normalised to 0 dB at t=0."""
    if isinstance(rir, (ImpulseResponse, Signal)):
        h, fs = rir.samples, rir.sample_rate
    else:
        h, fs = np.asarray(rir, dtype=np.float64), sample_rate
    if h.size == 0:
        raise ValueError("empty impulse response")
    energy = np.cumsum(np.square(h)[::-1])[::-1]
    total = energy[0]
    if total == 0.0:
        raise ValueError("impulse response has no energy")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(energy / total)
    db = np.maximum(db, DECAY_FLOOR_DB)
    # Rounding in the running sum can break monotonicity by an ulp.
    db = np.minimum.accumulate(db)
    db[0] = 0.0
    return DecayCurve(db, fs)


def estimate_rt30(decay: DecayCurve, upper_db: float = -5.0, lower_db: float = -35.0) -> float:
    """Reverberation time from a least-squares fit over the -5..-35 dB span.

    The fitted slope is extrapolated to a 60 dB decay.
    """
    v = decay.values
    below = np.nonzero(v <= lower_db)[0]
    if below.size == 0:
        raise InsufficientDecay(f"decay never reaches {lower_db} dB")
    first = int(np.argmax(v <= upper_db))
    last = int(below[0])
    if last - first < 2:
        raise InsufficientDecay("fit region holds fewer than three samples")
    t = np.arange(first, last + 1) / decay.sample_rate
    slope, _ = np.polyfit(t, v[first:last + 1], 1)
    if slope >= 0:
        raise InsufficientDecay("decay curve has no negative slope in the fit region")
    return float(-60.0 / slope)


def a_weighting_db(f) -> np.ndarray:
    """Analytic IEC 61672 A-weighting in dB (0 dB at 1 kHz)."""
    f2 = np.square(np.asarray(f, dtype=np.float64))
    num = 12194.0 ** 2 * f2 ** 2
    den = ((f2 + 20.6 ** 2) * np.sqrt((f2 + 107.7 ** 2) * (f2 + 737.9 ** 2)) * (f2 + 12194.0 ** 2))
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(num / den) + 2.0


@lru_cache(maxsize=8)
def a_weighting_fir(sample_rate: int) -> np.ndarray:
    """Zero-phase FIR approximation of the A-curve, odd length.

    Designed by frequency sampling on a dense grid; the kernel spans a
    quarter second so that the steep low-frequency part of the curve is
    resolved.
    """
    if sample_rate < 8000:
        raise ValueError("A-weighting needs a sample rate of at least 8 kHz")
    ntaps = (sample_rate // 4) | 1
    nfft = scipy.fft.next_fast_len(8 * ntaps)
    f = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    mag = 10.0 ** (a_weighting_db(f) / 20.0)
    kernel = np.fft.fftshift(scipy.fft.irfft(mag, nfft))
    mid = nfft // 2
    half = ntaps // 2
    kernel = kernel[mid - half:mid + half + 1] * np.kaiser(ntaps, 8.0)
    return kernel


def a_weight(signal: Signal) -> Signal:
    """Apply A-weighting. The filter is zero-phase, so timing is preserved."""
    kernel = a_weighting_fir(signal.sample_rate)
    y = scipy.signal.oaconvolve(signal.samples, kernel, mode="same") if len(signal) else signal.samples
    return Signal(y, signal.sample_rate)


def a_weighting_response_db(sample_rate: int, freqs) -> np.ndarray:
    """Magnitude response in dB of the realised A-weighting filter."""
    kernel = a_weighting_fir(sample_rate)
    _, h = scipy.signal.freqz(kernel, worN=np.asarray(freqs, dtype=float), fs=sample_rate)
    return 20.0 * np.log10(np.abs(h))


def label_powers(weighted: np.ndarray, segments: SegmentMap) -> tuple[float, float]:
    n = weighted.size
    speech = segments.mask(Label.SPEECH, n)
    noise = segments.mask(Label.NONSPEECH, n)
    if not speech.any() or not noise.any():
        raise ValueError("segment map needs both speech and nonspeech samples")
    return float(np.mean(weighted[speech] ** 2)), float(np.mean(weighted[noise] ** 2))


def snr_from_powers(p_speech: float, p_noise: float) -> float:
    """Noise-corrected SNR: speech-segment power includes the noise."""
    if p_noise == 0.0:
        return SNR_CAP_DB if p_speech > 0 else SNR_FLOOR_DB
    if p_speech <= p_noise:
        return SNR_FLOOR_DB
    snr = 10.0 * np.log10((p_speech - p_noise) / p_noise)
    return float(np.clip(snr, SNR_FLOOR_DB, SNR_CAP_DB))


def measure_snr(signal: Signal, segments: SegmentMap) -> float:
    """A-weighted SNR of speech over nonspeech intervals, in dB."""
    if not segments.of(Label.SPEECH) or not segments.of(Label.NONSPEECH):
        raise ValueError("segment map needs both speech and nonspeech intervals")
    weighted = a_weight(signal).samples
    return snr_from_powers(*label_powers(weighted, segments))
