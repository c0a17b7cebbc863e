"""RIR post-processing: passivation and delay compensation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.optimize

from .core import ImpulseResponse

DEFAULT_ONSET_DB = -20.0
# Responses within this much of unity are treated as already passive, which
# keeps passivate() idempotent under floating-point rounding.
_PASSIVE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PassivationReport:
    applied: bool
    scale_factor: float
    peak_magnitude_before: float


@dataclass(frozen=True)
class ShiftReport:
    requested: int | None
    applied: int
    onset: int


def _fft_size(n: int) -> int:
    return scipy.fft.next_fast_len(4 * max(n, 1))


# With 4x zero-padding a grid sample is never more than sinc(1/8) below the
# peak of its lobe; every lobe that might hold the supremum is refined.
_SCALLOP_LOSS = 0.97


def _dtft_mag(h: np.ndarray, n: np.ndarray, w: float) -> float:
    return abs(np.dot(h, np.exp(-1j * w * n)))


def max_frequency_response(samples: np.ndarray, max_candidates: int = 64) -> float:
    """Supremum of |H(f)| over frequency.

    Located on a 4x zero-padded FFT grid, then refined between grid points
    on the exact DTFT.
    """
    h = np.asarray(samples, dtype=np.float64)
    nfft = _fft_size(h.size)
    mag = np.abs(scipy.fft.rfft(h, nfft))
    best = float(mag.max())
    if h.size <= 1 or best == 0.0:
        return best
    padded = np.r_[-np.inf, mag, -np.inf]
    peaks = np.nonzero((padded[1:-1] >= padded[:-2]) & (padded[1:-1] >= padded[2:])
                       & (mag >= _SCALLOP_LOSS * best))[0]
    peaks = peaks[np.argsort(mag[peaks])[::-1][:max_candidates]]
    n = np.arange(h.size)
    step = 2.0 * np.pi / nfft
    for k in peaks:
        lo, hi = max(k - 1, 0) * step, min(k + 1, mag.size - 1) * step
        res = scipy.optimize.minimize_scalar(lambda w: -_dtft_mag(h, n, w), bounds=(lo, hi),
                                             method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def passivate(rir: ImpulseResponse) -> tuple[ImpulseResponse, PassivationReport]:
    """Scale ``rir`` down so that its gain is at most one at every frequency.

    Responses that are already passive are returned unchanged.
    """
    h = rir.samples
    if h.size == 0:
        raise ValueError("empty impulse response")
    peak = max_frequency_response(h)
    if peak <= 1.0 + _PASSIVE_TOLERANCE:
        return rir, PassivationReport(False, 1.0, peak)
    scale = 1.0 / peak
    out = dataclasses.replace(rir, signal=rir.signal.with_samples(h * scale))
    return out, PassivationReport(True, scale, peak)


def onset_index(samples: np.ndarray, threshold_db: float = DEFAULT_ONSET_DB) -> int:
    """First index with ``|h| >= max|h| * 10**(threshold_db / 20)``."""
    mag = np.abs(np.asarray(samples, dtype=np.float64))
    peak = mag.max() if mag.size else 0.0
    if peak == 0.0:
        raise ValueError("impulse response is all zeros")
    return int(np.argmax(mag >= peak * 10.0 ** (threshold_db / 20.0)))


def detect_onset(rir: ImpulseResponse, threshold_db: float = DEFAULT_ONSET_DB) -> int:
    return onset_index(rir.samples, threshold_db)


def compensate_delay(rir: ImpulseResponse, expected_delay: int | str = "auto",
                     threshold_db: float = DEFAULT_ONSET_DB
                     ) -> tuple[ImpulseResponse, ShiftReport]:
    """Shift the response left so the direct path sits at index 0.

    A requested shift larger than the detected onset is clamped to the onset
    so that the direct sound and early reflections are never cut away. The
    length is kept; the vacated end is zero-filled.
    """
    onset = detect_onset(rir, threshold_db)
    if expected_delay == "auto":
        requested = None
        shift = onset
    else:
        requested = int(expected_delay)
        if requested < 0:
            raise ValueError("expected_delay must be non-negative")
        shift = min(requested, onset)
    h = rir.samples
    out = np.zeros_like(h)
    out[:h.size - shift] = h[shift:]
    new_onset = None if rir.onset_sample is None else max(rir.onset_sample - shift, 0)
    shifted = dataclasses.replace(
        rir, signal=rir.signal.with_samples(out), onset_sample=new_onset,
        lag_offset=rir.lag_offset + shift)
    return shifted, ShiftReport(requested, shift, onset)
