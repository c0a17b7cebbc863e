"""Shared synthetic fixtures for the test suite."""

from pathlib import Path

import numpy as np

from rirkit.analysis import Label, SegmentMap
from rirkit.audio_io import write_audio
from rirkit.augmentation import ManifestEntry, write_manifest
from rirkit.core import Signal


def tone_bursts(fs, n_segments=4, speech_s=1.0, pause_s=0.5, seed=0, freqs=(300, 3000)):
    """Speech-like signal: alternating pauses and bursts of a few random tones."""
    rng = np.random.default_rng(seed)
    parts, ivs, pos = [], [], 0
    for _ in range(n_segments):
        pause = int(pause_s * fs)
        parts.append(np.zeros(pause))
        ivs.append((pos, pos + pause, Label.NONSPEECH))
        pos += pause
        n = int(speech_s * fs)
        t = np.arange(n) / fs
        burst = sum(rng.uniform(0.05, 0.2) * np.sin(2 * np.pi * rng.uniform(*freqs) * t
                                                    + rng.uniform(0, 2 * np.pi))
                    for _ in range(3))
        burst *= np.hanning(n) ** 0.25
        parts.append(burst)
        ivs.append((pos, pos + n, Label.SPEECH))
        pos += n
    pause = int(pause_s * fs)
    parts.append(np.zeros(pause))
    ivs.append((pos, pos + pause, Label.NONSPEECH))
    return np.concatenate(parts), SegmentMap(tuple(ivs))


def decaying_rir(fs, rt60, length, seed, delay=0, level=0.03):
    """Direct impulse plus an exponentially decaying noise tail."""
    rng = np.random.default_rng(seed)
    t = np.arange(length) / fs
    h = level * rng.standard_normal(length) * 10 ** (-3 * t / rt60)
    h[0] = 1.0
    return np.r_[np.zeros(delay), h]


def make_corpus(root, n_utts=5, n_rirs=3, n_noises=2, fs=16000, seed=0):
    """Write a small corpus with segment files and return the three manifest paths."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    utts, rirs, noises = [], [], []
    for i in range(n_utts):
        x, seg = tone_bursts(fs, n_segments=int(rng.integers(2, 4)), speech_s=0.4, pause_s=0.6,
                             seed=seed * 1000 + i)
        write_audio(root / "utt" / f"u{i:03d}.wav", Signal(x, fs))
        (root / "utt" / f"u{i:03d}.seg").write_text(seg.to_text(fs))
        utts.append(ManifestEntry(f"u{i:03d}", f"utt/u{i:03d}.wav", f"utt/u{i:03d}.seg"))
    for i in range(n_rirs):
        h = decaying_rir(fs, rng.uniform(0.1, 0.25), int(0.25 * fs), seed * 1000 + i)
        write_audio(root / "rir" / f"r{i}.wav", Signal(h / np.sum(np.abs(h)), fs))
        rirs.append(ManifestEntry(f"r{i}", f"rir/r{i}.wav"))
    for i in range(n_noises):
        write_audio(root / "noise" / f"n{i}.wav", Signal(0.1 * rng.standard_normal(fs // 2), fs))
        noises.append(ManifestEntry(f"n{i}", f"noise/n{i}.wav"))
    paths = []
    for name, entries in (("corpus", utts), ("rirs", rirs), ("noises", noises)):
        write_manifest(root / f"{name}.tsv", entries)
        paths.append(root / f"{name}.tsv")
    return tuple(paths)


# --- Acceptance reporting -------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


class criterion:
    """Record the outcome of one acceptance criterion.

    Use as ``with criterion(3, "clock drift") as note: ...`` and call
    ``note("...")`` with the measured numbers. A line is printed at once and
    collected for the end-of-session summary.
    """

    def __init__(self, number: int, title: str):
        self.number, self.title, self.notes = number, title, []

    def __call__(self, text: str) -> None:
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        detail = "; ".join(self.notes)
        if not ok and exc_type is not AssertionError:
            detail = f"{detail}; {exc_type.__name__}: {exc}".lstrip("; ")
        ACCEPTANCE_RESULTS[self.number] = (self.title, ok, detail)
        print(format_result(self.number))
        return False


def format_result(number: int) -> str:
    title, ok, detail = ACCEPTANCE_RESULTS[number]
    return f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (
        f"  [{detail}]" if detail else "")
