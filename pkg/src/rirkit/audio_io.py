"""WAV reading and writing.

Integer PCM is scaled to +-1.0 full scale on read. Writes default to 32-bit
float, which keeps the dynamic range of estimated responses.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io.wavfile

from .core import Signal

_FORMATS = {"float32": np.float32, "float64": np.float64, "int16": np.int16}


def read_audio(path) -> Signal:
    """Read a mono WAV file; multi-channel files are rejected."""
    rate, data = scipy.io.wavfile.read(Path(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.integer):
        x = data.astype(np.float64) / float(-np.iinfo(data.dtype).min)
    else:
        x = data.astype(np.float64)
    return Signal(x, rate)


def write_audio(path, signal: Signal, fmt: str = "float32") -> Path:
    try:
        dtype = _FORMATS[fmt]
    except KeyError:
        raise ValueError(f"unknown sample format {fmt!r}; choose from {sorted(_FORMATS)}") from None
    x = signal.samples
    if dtype is np.int16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = x.astype(dtype)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.wavfile.write(path, signal.sample_rate, data)
    return path


def audio_length(path) -> tuple[int, int]:
    """``(num_samples, sample_rate)`` without copying the payload."""
    rate, data = scipy.io.wavfile.read(Path(path), mmap=True)
    return int(data.shape[0]), int(rate)
