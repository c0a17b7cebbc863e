"""Impulse response estimation from recorded MLS and sweep playbacks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.signal

from .core import ImpulseResponse, Origin, Signal, circular_cross_correlate, interpolate_at, resample
from .excitation import EssSpec, MlsSpec, ess_inverse_filter, mls_period
from .postprocess import onset_index

# Peak must exceed this multiple of the robust floor of the correlation.
CONFIDENCE_FLOOR = 10.0
MAX_DRIFT = 0.01
ESS_GUARD_SECONDS = 1e-3
# The deconvolved sweep output is not stationary (the overlap with the inverse
# filter shrinks towards the end), so its peak is compared with the RMS of the
# search region. Pure noise reaches about 12x; any real response far exceeds it.
ESS_CONFIDENCE_FLOOR = 20.0


class MeasurementError(ValueError):
    """A recording could not be turned into an impulse response."""


class ExcitationNotFound(MeasurementError):
    pass


class ImplausibleDrift(MeasurementError):
    pass


class TimeAliasingRisk(MeasurementError):
    pass


class DeconvolutionFailed(MeasurementError):
    pass


@dataclass(frozen=True)
class DriftEstimate:
    """Recorded-clock over playback-clock sample-rate ratio."""

    ratio: float
    confidence: float

    def __post_init__(self):
        if not 1 - MAX_DRIFT <= self.ratio <= 1 + MAX_DRIFT:
            raise ImplausibleDrift(f"clock ratio {self.ratio!r} outside [0.99, 1.01]")

    @property
    def ppm(self) -> float:
        return (self.ratio - 1.0) * 1e6


def _peak_to_floor(x: np.ndarray) -> float:
    mag = np.abs(x)
    # Median absolute value scaled to a Gaussian RMS; robust to the RIR itself.
    floor = 1.4826 * np.median(mag)
    if floor == 0.0:
        return np.inf if mag.max() > 0 else 0.0
    return float(mag.max() / floor)


def _mls_deconvolve(period_avg: np.ndarray, reference: np.ndarray) -> np.ndarray:
    L = reference.size
    r = circular_cross_correlate(reference, period_avg)
    # r = (L + 1) h - sum(h) for an MLS; sum(r) == sum(h) recovers the offset.
    return (r + r.sum()) / (L + 1)


def _reference_array(reference, spec: MlsSpec) -> np.ndarray:
    if reference is None:
        return mls_period(spec.order).astype(np.float64)
    ref = reference.samples if isinstance(reference, Signal) else np.asarray(reference, float)
    if ref.size != spec.period:
        raise ValueError(f"reference period has {ref.size} samples, expected {spec.period}")
    return ref


def _relative_delay(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Circular delay of ``b`` relative to ``a`` with sub-sample precision.

    Integer part from the cross-correlation peak, fractional part from a
    weighted least-squares fit of the residual cross-spectrum phase. Also
    returns the peak-to-floor ratio of the cross-correlation.
    """
    n = a.size
    C = np.conj(scipy.fft.rfft(a)) * scipy.fft.rfft(b)
    xc = scipy.fft.irfft(C, n)
    coarse = int(np.argmax(xc))
    omega = 2 * np.pi * np.arange(C.size) / n
    resid = C * np.exp(1j * omega * coarse)
    w = np.abs(resid)
    frac = -np.sum(w * omega * np.angle(resid)) / np.sum(w * omega * omega)
    delay = coarse + frac
    if delay > n / 2:
        delay -= n
    return float(delay), _peak_to_floor(xc)


def estimate_drift(recording: Signal, spec: MlsSpec, reference: Signal | None = None,
                   start: int = 0, iterations: int = 3) -> DriftEstimate:
    """Estimate the recording/playback clock ratio from an MLS train.

    One period-long window is taken near each end of the train (the first
    window skips the warm-up period). Each window is deconvolved against the
    reference period; the circular delay between the two responses gives
    the span, in playback samples, between the window starts. The windows
    are re-read on the drift-corrected time axis and the estimate refined.
    """
    ref = _reference_array(reference, spec)
    L = spec.period
    R = spec.repetitions
    if R < 3:
        raise ValueError("drift estimation needs at least three MLS periods")
    y = recording.samples
    s1 = start + L
    margin = int(np.ceil(MAX_DRIFT * R * L))
    s2 = start + (R - 1) * L - margin
    if s2 <= s1 or y.size < start + R * L - margin:
        raise ValueError("recording too short for drift estimation")
    span = s2 - s1

    ratio = 1.0
    confidence = np.inf
    for _ in range(iterations):
        grid = np.arange(L) * ratio
        if ratio == 1.0:
            w1, w2 = y[s1:s1 + L], y[s2:s2 + L]
        else:
            w1 = interpolate_at(y, s1 + grid)
            w2 = interpolate_at(y, s2 + grid)
        h1 = _mls_deconvolve(w1, ref)
        h2 = _mls_deconvolve(w2, ref)
        # Both windows see the same smearing from residual drift, so their
        # mutual correlation stays sharp even when each response is not.
        delta, confidence = _relative_delay(h1, h2)
        if confidence < CONFIDENCE_FLOOR:
            raise ExcitationNotFound(
                f"MLS correlation peak only {confidence:.1f}x above floor")
        # h2 lags h1 by -span / ratio modulo L.
        q = np.round((span / ratio + delta) / L)
        new_ratio = span / (q * L - delta)
        if not 1 - MAX_DRIFT <= new_ratio <= 1 + MAX_DRIFT:
            raise ImplausibleDrift(f"clock ratio {new_ratio!r} outside [0.99, 1.01]")
        converged = abs(new_ratio - ratio) < 1e-13
        ratio = float(new_ratio)
        if converged:
            break
    return DriftEstimate(ratio, float(confidence))


def compensate_drift(recording: Signal, drift: DriftEstimate) -> Signal:
    """Resample the recording onto the playback clock."""
    if drift.ratio == 1.0:
        return recording
    return resample(recording, 1.0 / drift.ratio)


def estimate_rir_mls(recording: Signal, spec: MlsSpec, reference_period: Signal | None,
                     rir_length: int, start: int = 0,
                     min_confidence: float = CONFIDENCE_FLOOR) -> ImpulseResponse:
    """Average the steady-state periods and deconvolve by circular correlation.

    The first period is discarded; the remaining full periods present in the
    recording are averaged. ``start`` is the recording index where playback
    of the train began. Pass ``min_confidence=0`` to get an estimate even
    from a recording whose correlation peak has been smeared away.
    """
    ref = _reference_array(reference_period, spec)
    L = spec.period
    if rir_length > L:
        raise TimeAliasingRisk(f"rir_length {rir_length} exceeds MLS period {L}")
    if rir_length < 1:
        raise ValueError("rir_length must be positive")
    y = recording.samples
    n_periods = min(spec.repetitions, (y.size - start) // L)
    if n_periods < 2:
        raise ValueError("recording holds fewer than two full MLS periods")
    periods = y[start + L:start + n_periods * L].reshape(n_periods - 1, L)
    h = _mls_deconvolve(periods.mean(axis=0), ref)
    if _peak_to_floor(h) < min_confidence:
        raise ExcitationNotFound("no MLS correlation peak above the floor")
    out = h[:rir_length]
    return ImpulseResponse(
        Signal(out, recording.sample_rate), onset_sample=onset_index(out),
        origin=Origin.ESTIMATED, method="mls",
        meta={"periods_averaged": n_periods - 1})


def estimate_rir_ess(recording: Signal, spec: EssSpec, rir_length: int) -> ImpulseResponse:
    """Deconvolve a sweep recording with the analytic inverse filter.

    Harmonic distortion products land at negative lags, before the linear
    response; only the window starting a short guard interval before the
    main peak is kept. ``lag_offset`` of the result gives the system lag of
    its first sample.
    """
    if recording.sample_rate != spec.sample_rate:
        raise ValueError("recording and sweep sample rates differ")
    if rir_length < 1:
        raise ValueError("rir_length must be positive")
    n = spec.sweep_samples
    if len(recording) < n:
        raise ValueError("recording is shorter than the sweep")
    inverse = ess_inverse_filter(spec).samples
    d = scipy.signal.fftconvolve(recording.samples, inverse)
    zero_lag = n - 1
    guard = int(round(ESS_GUARD_SECONDS * spec.sample_rate))
    region = d[zero_lag - guard:]
    region_rms = np.sqrt(np.mean(np.square(region))) if region.size else 0.0
    if region_rms == 0.0 or np.max(np.abs(region)) < ESS_CONFIDENCE_FLOOR * region_rms:
        raise DeconvolutionFailed("no linear response peak above the noise floor")
    peak = zero_lag - guard + int(np.argmax(np.abs(region)))
    first = max(peak - guard, 0)
    out = d[first:first + rir_length]
    if out.size < rir_length:
        out = np.concatenate([out, np.zeros(rir_length - out.size)])
    return ImpulseResponse(
        Signal(out, spec.sample_rate), onset_sample=onset_index(out),
        origin=Origin.ESTIMATED, method="ess", lag_offset=first - zero_lag)
