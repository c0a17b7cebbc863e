"""Simulated measurement chain used as ground truth for estimator tests.

Playback goes through an optional memoryless loudspeaker nonlinearity, the
room response, a recording clock that runs ``drift_ppm`` fast or slow, and
additive white noise.

Clock drift is applied with an FFT-domain resampler. It shares no code with
the windowed-sinc resampler used for drift compensation, so a round trip
through both cannot hide a bug common to the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.signal

from .core import ImpulseResponse, Origin, Signal, rms


@dataclass(frozen=True)
class ChainSpec:
    true_rir: ImpulseResponse
    drift_ppm: float = 0.0
    noise_level_db: float = -np.inf
    cubic: float = 0.0

    def __post_init__(self):
        if abs(self.drift_ppm) > 1000:
            raise ValueError("|drift_ppm| must not exceed 1000")
        if not 0.0 <= self.cubic <= 0.5:
            raise ValueError("cubic coefficient must lie in [0, 0.5]")

    @property
    def nonlinearity(self) -> str:
        return "none" if self.cubic == 0 else f"cubic:{self.cubic:g}"


def fft_resample(x: np.ndarray, n_out: int) -> np.ndarray:
    """Ideal band-limited resampling of a periodic sequence to ``n_out`` samples.

    Output sample ``k`` is the trigonometric interpolant of ``x`` at input
    position ``k * len(x) / n_out``.
    """
    n = x.size
    if n_out == n:
        return np.array(x, dtype=np.float64)
    X = scipy.fft.rfft(x)
    m = min(n, n_out)
    Y = np.zeros(n_out // 2 + 1, dtype=complex)
    keep = m // 2 + 1
    Y[:keep] = X[:keep]
    if n_out > n and n % 2 == 0:
        # The old Nyquist bin becomes a pair of conjugate bins; split it.
        Y[n // 2] *= 0.5
    return scipy.fft.irfft(Y, n_out) * (n_out / n)


def drift_length(n: int, drift_ppm: float) -> int:
    return int(round(n * (1.0 + drift_ppm * 1e-6)))


def simulate_measurement(excitation: Signal, chain: ChainSpec, seed: int = 0) -> Signal:
    """Produce the recording a microphone would capture for ``excitation``.

    The output holds the full convolution tail, stretched by the clock drift.
    """
    if excitation.sample_rate != chain.true_rir.sample_rate:
        raise ValueError("excitation and RIR sample rates differ")
    x = excitation.samples
    if chain.cubic:
        x = x + chain.cubic * x ** 3
    y = scipy.signal.fftconvolve(x, chain.true_rir.samples)
    if chain.drift_ppm:
        y = fft_resample(y, drift_length(y.size, chain.drift_ppm))
    if np.isfinite(chain.noise_level_db):
        rng = np.random.default_rng(seed)
        sigma = rms(y) * 10.0 ** (chain.noise_level_db / 20.0)
        y = y + sigma * rng.standard_normal(y.size)
    return Signal(y, excitation.sample_rate)


def exponential_rir(rt60: float, sample_rate: int, length: int, seed: int = 0,
                    band: tuple[float, float | None] | None = (100.0, None), delay: int = 100,
                    direct: float = 25.0) -> ImpulseResponse:
    """Synthetic RIR: a direct-path impulse and an exponentially decaying tail.

    The tail is Gaussian noise whose energy envelope falls 60 dB in ``rt60``
    seconds; ``direct`` is the direct-path amplitude relative to the tail's
    initial RMS. With ``band`` set the response is passed through a causal
    elliptic band-pass (upper edge defaults to 0.75 of Nyquist), keeping it
    inside the band an excitation can measure without adding pre-ringing.
    The result is scaled to unit peak.
    """
    if length <= delay:
        raise ValueError("length must exceed delay")
    rng = np.random.default_rng(seed)
    n = length - delay
    t = np.arange(n) / sample_rate
    h = rng.standard_normal(n) * np.exp(-3.0 * np.log(10.0) * t / rt60)
    h[0] = direct
    if band:
        lo, hi = band
        hi = 0.75 * sample_rate / 2 if hi is None else hi
        sos = scipy.signal.ellip(6, 0.05, 100.0, [lo, hi], btype="bandpass", fs=sample_rate,
                                 output="sos")
        h = scipy.signal.sosfilt(sos, h)
    h = np.concatenate([np.zeros(delay), h])
    h /= np.max(np.abs(h))
    return ImpulseResponse(Signal(h, sample_rate), onset_sample=None, origin=Origin.SIMULATED,
                           method="exponential")
