"""Measurement excitation signals: MLS, IRS and exponential sine sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Signal

# Feedback taps per register length. Taps t_i give the recurrence
# a[n] = xor_i a[n - t_i], whose characteristic polynomial is primitive.
PRIMITIVE_POLYNOMIALS: dict[int, tuple[int, ...]] = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 11, 8, 6),
    13: (13, 12, 10, 9),
    14: (14, 13, 11, 9),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 18, 17, 13),
    20: (20, 17),
    21: (21, 19),
    22: (22, 21),
    23: (23, 18),
    24: (24, 23, 22, 17),
}


@dataclass(frozen=True)
class MlsSpec:
    order: int
    repetitions: int = 1
    sample_rate: int = 48000

    def __post_init__(self):
        if self.order not in PRIMITIVE_POLYNOMIALS:
            raise ValueError(f"no primitive polynomial registered for order {self.order}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def period(self) -> int:
        return (1 << self.order) - 1


@dataclass(frozen=True)
class EssSpec:
    """Exponential sine sweep parameters.

    ``fade`` is the length in seconds of the half-Hann taper applied to each
    end of the sweep. Zero gives the bare analytic sweep.
    """

    f1: float = 20.0
    f2: float | None = None
    duration: float = 10.0
    tail_silence: float = 2.0
    sample_rate: int = 48000
    fade: float = 0.05

    def __post_init__(self):
        if self.f2 is None:
            object.__setattr__(self, "f2", 0.45 * self.sample_rate)
        if not 0 < self.f1 < self.f2 <= self.sample_rate / 2:
            raise ValueError(
                f"need 0 < f1 < f2 <= fs/2, got f1={self.f1}, f2={self.f2}, fs={self.sample_rate}")
        if self.duration <= 0 or self.tail_silence < 0 or self.fade < 0:
            raise ValueError("duration must be positive, tail_silence and fade non-negative")
        if self.sweep_samples < 2:
            raise ValueError("sweep is shorter than two samples")
        if 2 * self.fade > self.duration:
            raise ValueError("fade longer than half the sweep")

    @property
    def sweep_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def tail_samples(self) -> int:
        return int(round(self.tail_silence * self.sample_rate))

    @property
    def rate(self) -> float:
        """Time constant of the exponential frequency growth, in seconds."""
        return self.duration / np.log(self.f2 / self.f1)


def mls_period(order: int) -> np.ndarray:
    """One period of the +-1 maximum length sequence, as int8.

    Fibonacci LFSR with the registered taps, all-ones seed; the output bit
    maps 0 -> +1 and 1 -> -1.
    """
    taps = PRIMITIVE_POLYNOMIALS.get(order)
    if taps is None:
        raise ValueError(f"no primitive polynomial registered for order {order}")
    length = (1 << order) - 1
    bits = np.empty(length + order, dtype=np.uint8)
    bits[:order] = 1
    n = order
    # Vectorize in blocks no longer than the smallest lag.
    step = min(t for t in taps)
    while n < bits.size:
        stop = min(n + step, bits.size)
        acc = np.zeros(stop - n, dtype=np.uint8)
        for t in taps:
            acc ^= bits[n - t:stop - t]
        bits[n:stop] = acc
        n = stop
    return (1 - 2 * bits[:length].astype(np.int8)).astype(np.int8)


def generate_mls(spec: MlsSpec) -> Signal:
    period = mls_period(spec.order).astype(np.float64)
    return Signal(np.tile(period, spec.repetitions), spec.sample_rate)


def generate_irs(spec: MlsSpec) -> Signal:
    period = mls_period(spec.order).astype(np.float64)
    return Signal(np.tile(np.concatenate([period, -period]), spec.repetitions), spec.sample_rate)


def _sweep(spec: EssSpec) -> np.ndarray:
    n = spec.sweep_samples
    t = np.arange(n) / spec.sample_rate
    L = spec.rate
    x = np.sin(2 * np.pi * spec.f1 * L * np.expm1(t / L))
    k = int(round(spec.fade * spec.sample_rate))
    if k > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(k) + 0.5) / k)
        x[:k] *= ramp
        x[n - k:] *= ramp[::-1]
    return x


def generate_ess(spec: EssSpec) -> Signal:
    """Exponential sweep from f1 to f2 followed by ``tail_silence`` of zeros."""
    return Signal(np.concatenate([_sweep(spec), np.zeros(spec.tail_samples)]), spec.sample_rate)


def ess_inverse_filter(spec: EssSpec) -> Signal:
    """Analytic inverse of the sweep.

    The time-reversed sweep weighted by an envelope proportional to the
    instantaneous frequency, which flattens the 1/f energy density of the
    sweep. The gain follows from a stationary-phase evaluation of the sweep
    spectrum, so that sweep * inverse has unit in-band gain and its peak at
    index ``sweep_samples - 1``.
    """
    x = _sweep(spec)
    n = x.size
    fs = spec.sample_rate
    L = spec.rate
    t = np.arange(n) / fs
    # Sample i of the inverse lines up with sweep time (n - 1 - i) / fs.
    f_inst = spec.f1 * np.exp((t[::-1]) / L)
    envelope = 4.0 * f_inst / (L * fs * fs)
    return Signal(x[::-1] * envelope, fs)


def instantaneous_frequency(spec: EssSpec, t) -> np.ndarray:
    """Analytic instantaneous frequency of the sweep at time ``t`` (s)."""
    return spec.f1 * np.exp(np.asarray(t, dtype=float) / spec.rate)
