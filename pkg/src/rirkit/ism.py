"""Image-source simulation of shoebox rooms.

Walls are ordered ``(x=0, x=Lx, y=0, y=Ly, z=0, z=Lz)``. Each image source
contributes a band-limited impulse at its propagation delay, weighted by the
product of the reflection coefficients it picked up, spherical spreading
``1 / (4 pi d)`` and the microphone's first-order directivity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import ImpulseResponse, Origin, Signal

SPEED_OF_SOUND = 343.0
# Hann-windowed sinc spanning 81 taps around the rounded delay.
KERNEL_HALF = 40
_WINDOW_HALF = KERNEL_HALF + 0.5
# Delays within this many samples of an integer are treated as that integer
# when computing the onset, so d / c * fs = 159.99999999999997 maps to 160.
_ONSET_EPS = 1e-9


class Directivity(enum.Enum):
    """First-order patterns ``g(theta) = a + (1 - a) cos(theta)``."""

    OMNIDIRECTIONAL = 1.0
    SUBCARDIOID = 0.75
    CARDIOID = 0.5
    HYPERCARDIOID = 0.25
    BIDIRECTIONAL = 0.0

    def gain(self, cos_theta):
        a = self.value
        return a + (1.0 - a) * np.asarray(cos_theta)

    @classmethod
    def parse(cls, name: str) -> "Directivity":
        aliases = {"omni": "omnidirectional", "figure8": "bidirectional", "dipole": "bidirectional"}
        key = aliases.get(name.lower(), name.lower())
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValueError(f"unknown directivity {name!r}") from None


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple[float, float, float]
    betas: tuple[float, ...] = (0.0,) * 6
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        betas = tuple(float(b) for b in self.betas)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f"room dimensions must be three positive lengths, got {dims}")
        if len(betas) == 1:
            betas = betas * 6
        if len(betas) != 6 or not all(0.0 <= b <= 1.0 for b in betas):
            raise ValueError(f"need six reflection coefficients in [0, 1], got {betas}")
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "betas", betas)

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def contains(self, p) -> bool:
        return all(0.0 < c < d for c, d in zip(p, self.dimensions))

    @classmethod
    def with_rt60(cls, dimensions, rt60: float, speed_of_sound: float = SPEED_OF_SOUND):
        beta = sabine_beta_from_rt60(dimensions, rt60, speed_of_sound)
        return cls(tuple(dimensions), (beta,) * 6, speed_of_sound)


@dataclass(frozen=True)
class SourceSpec:
    position: tuple[float, float, float]


@dataclass(frozen=True)
class MicSpec:
    position: tuple[float, float, float]
    orientation: tuple[float, float] = (0.0, 0.0)
    directivity: Directivity = Directivity.OMNIDIRECTIONAL

    @property
    def axis(self) -> np.ndarray:
        az, el = self.orientation
        return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])


class RoomAcousticsError(ValueError):
    pass


def sabine_beta_from_rt60(dimensions, rt60: float, speed_of_sound: float = SPEED_OF_SOUND) -> float:
    """Uniform wall reflection coefficient giving ``rt60`` by Sabine's formula.

    ``alpha = 24 ln(10) V / (c S rt60)`` and ``beta = sqrt(1 - alpha)``.
    """
    if rt60 <= 0:
        raise ValueError("rt60 must be positive")
    if np.isinf(rt60):
        return 1.0
    lx, ly, lz = (float(d) for d in dimensions)
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 24.0 * math.log(10.0) * volume / (speed_of_sound * surface * rt60)
    if alpha > 1.0:
        raise RoomAcousticsError(
            f"room cannot achieve RT60 {rt60} s (needs absorption {alpha:.3f} > 1)")
    return math.sqrt(1.0 - alpha)


def sabine_rt60(room: RoomSpec) -> float:
    """Sabine reverberation time for the room's mean absorption."""
    lx, ly, lz = room.dimensions
    areas = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])
    absorption = np.sum(areas * (1.0 - np.square(room.betas)))
    if absorption == 0:
        return np.inf
    return 24.0 * math.log(10.0) * room.volume / (room.speed_of_sound * absorption)


@numba.njit(cache=True)
def _render(out, delays, amps, half, window_half):
    n = out.size
    for i in range(delays.size):
        tau = delays[i]
        centre = int(np.floor(tau + 0.5))
        for k in range(-half, half + 1):
            idx = centre + k
            if idx < 0 or idx >= n:
                continue
            u = idx - tau
            if u == 0.0:
                val = 1.0
            else:
                val = math.sin(math.pi * u) / (math.pi * u)
            val *= 0.5 * (1.0 + math.cos(math.pi * u / window_half))
            out[idx] += amps[i] * val


def _axis_images(src: float, mic: float, length: float, beta_lo: float, beta_hi: float,
                 reach: float):
    """Per-axis image offsets (image - mic), reflection counts and gains."""
    n_max = int(math.ceil(reach / (2.0 * length))) + 1
    n = np.arange(-n_max, n_max + 1)
    offsets, orders, gains = [], [], []
    for q in (0, 1):
        offsets.append((1 - 2 * q) * src + 2 * n * length - mic)
        lo = np.abs(n - q)
        hi = np.abs(n)
        orders.append(lo + hi)
        gains.append(np.power(beta_lo, lo) * np.power(beta_hi, hi))
    offsets = np.concatenate(offsets)
    keep = np.abs(offsets) <= reach
    return offsets[keep], np.concatenate(orders)[keep], np.concatenate(gains)[keep]


def image_sources(room: RoomSpec, source: SourceSpec, mic: MicSpec, reach: float,
                  max_order: int | None = None):
    """Yield ``(distance, gain)`` arrays, chunked along x, for images within ``reach`` metres.

    ``gain`` already includes wall reflections, spreading and directivity.
    ``max_order`` caps the total number of wall reflections per image.
    """
    b = room.betas
    ax = [
        _axis_images(source.position[i], mic.position[i], room.dimensions[i],
                     b[2 * i], b[2 * i + 1], reach)
        for i in range(3)
    ]
    (xo, xr, xg), (yo, yr, yg), (zo, zr, zg) = ax
    axis = mic.axis
    pattern = mic.directivity
    yz_d2 = yo[:, None] ** 2 + zo[None, :] ** 2
    yz_gain = yg[:, None] * zg[None, :]
    yz_order = yr[:, None] + zr[None, :]
    yz_dot = yo[:, None] * axis[1] + zo[None, :] * axis[2]
    for i in range(xo.size):
        if xg[i] == 0.0 and xr[i] > 0:
            continue
        d = np.sqrt(xo[i] ** 2 + yz_d2)
        g = xg[i] * yz_gain
        mask = (d <= reach) & (g != 0.0)
        if max_order is not None:
            mask &= (xr[i] + yz_order) <= max_order
        if not mask.any():
            continue
        d = d[mask]
        g = g[mask]
        if pattern is not Directivity.OMNIDIRECTIONAL:
            cos_t = (xo[i] * axis[0] + yz_dot[mask]) / d
            g = g * pattern.gain(cos_t)
        yield d, g / (4.0 * math.pi * d)


def simulate_rir_ism(room: RoomSpec, source: SourceSpec, mic: MicSpec, rir_length: int,
                     sample_rate: int, max_order: int | None = None) -> ImpulseResponse:
    """Render the image-source impulse response of a shoebox room.

    Images whose kernel would start beyond ``rir_length`` are skipped, so
    the rendered window is exact for the chosen ``max_order``.
    """
    if not room.contains(source.position):
        raise ValueError(f"source {source.position} is not strictly inside the room")
    if not room.contains(mic.position):
        raise ValueError(f"microphone {mic.position} is not strictly inside the room")
    c = room.speed_of_sound
    direct = float(np.linalg.norm(np.subtract(source.position, mic.position)))
    if direct == 0.0:
        raise RoomAcousticsError("microphone coincides with source (singular 1/d)")
    onset = int(math.floor(direct / c * sample_rate + _ONSET_EPS))
    if rir_length <= onset:
        raise ValueError(f"rir_length {rir_length} does not reach the direct path at {onset}")
    reach = (rir_length + KERNEL_HALF) * c / sample_rate
    out = np.zeros(rir_length)
    for d, g in image_sources(room, source, mic, reach, max_order):
        _render(out, d * (sample_rate / c), g, KERNEL_HALF, _WINDOW_HALF)
    return ImpulseResponse(Signal(out, sample_rate), onset_sample=onset, origin=Origin.SIMULATED,
                           method="ism", meta={"direct_distance": direct})
