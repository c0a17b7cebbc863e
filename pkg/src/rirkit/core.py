"""Signal containers and elementary DSP shared across the package.

All audio is carried as float64 numpy arrays. Containers are frozen and their
sample arrays are marked read-only, so values can be passed between threads
without copying.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
import scipy.fft
import scipy.signal


class Origin(enum.Enum):
    ESTIMATED = "estimated"
    SIMULATED = "simulated"
    LOADED = "loaded"


def _frozen_array(samples) -> np.ndarray:
    arr = np.array(samples, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled real-valued mono audio.

    Parameters
    ----------
    samples : array_like
        Amplitudes, nominal full scale is +-1.0.
    sample_rate : int
        Sampling frequency in Hz.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = _frozen_array(self.samples)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("signal contains non-finite samples")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples) -> "Signal":
        return Signal(samples, self.sample_rate)


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    """A signal holding an acoustic impulse response.

    ``onset_sample`` is the index of the direct-path arrival when known.
    ``lag_offset`` is the system lag, in samples, that index 0 corresponds
    to; estimators that keep a few samples before the main peak report a
    negative value here.
    """

    signal: Signal
    onset_sample: int | None = None
    origin: Origin = Origin.LOADED
    method: str | None = None
    lag_offset: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.onset_sample is not None:
            if self.onset_sample < 0 or self.onset_sample >= len(self.signal):
                raise ValueError(
                    f"onset_sample {self.onset_sample} outside [0, {len(self.signal)})")

    @property
    def samples(self) -> np.ndarray:
        return self.signal.samples

    @property
    def sample_rate(self) -> int:
        return self.signal.sample_rate

    def __len__(self) -> int:
        return len(self.signal)

    @classmethod
    def from_array(cls, samples, sample_rate, **kwargs) -> "ImpulseResponse":
        return cls(Signal(samples, sample_rate), **kwargs)


def _check_rates(a: Signal, b: Signal):
    if a.sample_rate != b.sample_rate:
        raise ValueError(f"sample rate mismatch: {a.sample_rate} != {b.sample_rate}")


def convolve(a: Signal, b: Signal) -> Signal:
    """Full linear convolution, length ``len(a) + len(b) - 1``."""
    _check_rates(a, b)
    if len(a) == 0 or len(b) == 0:
        return Signal(np.zeros(0), a.sample_rate)
    y = scipy.signal.convolve(a.samples, b.samples, mode="full", method="auto")
    return Signal(y, a.sample_rate)


def circular_cross_correlate(x: Signal | np.ndarray, y: Signal | np.ndarray) -> np.ndarray:
    """Circular cross-correlation ``r[k] = sum_t x[t] * y[(t + k) mod L]``."""
    xs = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64)
    ys = y.samples if isinstance(y, Signal) else np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape:
        raise ValueError(f"length mismatch: {xs.size} != {ys.size}")
    n = xs.size
    X = scipy.fft.rfft(xs)
    Y = scipy.fft.rfft(ys)
    return scipy.fft.irfft(np.conj(X) * Y, n)


# Windowed-sinc interpolation kernel. The table holds sinc(v) * kaiser(v / ZC)
# for v in [0, ZC] at _OVERSAMPLE points per zero crossing; lookups are linear.
_ZERO_CROSSINGS = 24
_KAISER_BETA = 9.0
_OVERSAMPLE = 4096


@lru_cache(maxsize=1)
def _kernel_table() -> np.ndarray:
    v = np.arange(_ZERO_CROSSINGS * _OVERSAMPLE + 2) / _OVERSAMPLE
    win = np.i0(_KAISER_BETA * np.sqrt(np.clip(1.0 - (v / _ZERO_CROSSINGS) ** 2, 0.0, None)))
    win /= np.i0(_KAISER_BETA)
    table = np.sinc(v) * win
    table[v >= _ZERO_CROSSINGS] = 0.0
    return table


@numba.njit(parallel=True, cache=True)
def _interp_kernel(pad, positions, table, half, scale, shift):
    out = np.empty(positions.size)
    top = table.size - 2
    for i in numba.prange(positions.size):
        p = positions[i]
        base = int(np.floor(p))
        frac = p - base
        acc = 0.0
        for k in range(-half + 1, half + 1):
            u = abs(frac - k) * scale
            j = int(u)
            if j > top:
                continue
            w = u - j
            acc += pad[base + k + shift] * (table[j] * (1.0 - w) + table[j + 1] * w)
        out[i] = acc
    return out


def interpolate_at(x: np.ndarray, positions: np.ndarray, cutoff: float = 1.0) -> np.ndarray:
    """Band-limited evaluation of ``x`` at fractional sample positions.

    ``cutoff`` is the low-pass corner relative to the Nyquist frequency of
    ``x``. Samples outside the array are treated as zero.
    """
    x = np.asarray(x, dtype=np.float64)
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    if positions.size == 0:
        return np.zeros(0)
    half = int(np.ceil(_ZERO_CROSSINGS / cutoff))
    lo = int(np.floor(positions.min())) - half
    hi = int(np.floor(positions.max())) + half + 1
    # Zero-extend x so that every tap index is in range.
    left = max(0, -lo)
    pad = np.concatenate([np.zeros(left), x, np.zeros(max(0, hi - x.size + 1))])
    out = _interp_kernel(pad, positions, _kernel_table(), half,
                         cutoff * _OVERSAMPLE, left)
    return out * cutoff


def resample(s: Signal, ratio: float) -> Signal:
    """Stretch a signal by ``ratio`` using windowed-sinc interpolation.

    Output sample ``n`` is the band-limited value of the input at time
    ``n / ratio`` input samples, so the output has ``round(len(s) * ratio)``
    samples at the same nominal rate. A tone of frequency ``f`` comes out at
    ``f / ratio``.
    """
    if not 0.5 < ratio < 2.0:
        raise ValueError(f"resampling ratio {ratio} outside (0.5, 2.0)")
    n_out = int(round(len(s) * ratio))
    if ratio == 1.0:
        return Signal(s.samples, s.sample_rate)
    positions = np.arange(n_out) / ratio
    y = interpolate_at(s.samples, positions, cutoff=min(1.0, ratio))
    return Signal(y, s.sample_rate)


def rms(x) -> float:
    x = x.samples if isinstance(x, Signal) else np.asarray(x)
    if x.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.square(x))))


def normalized_error_db(estimate, reference) -> float:
    """``10 log10(sum((e - r)^2) / sum(r^2))`` over equal-length arrays."""
    e = np.asarray(estimate, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if e.shape != r.shape:
        raise ValueError(f"shape mismatch {e.shape} != {r.shape}")
    num = np.sum((e - r) ** 2)
    den = np.sum(r ** 2)
    if den == 0:
        raise ValueError("reference has zero energy")
    if num == 0:
        return -np.inf
    return float(10 * np.log10(num / den))
