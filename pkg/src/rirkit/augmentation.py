"""Reverberation and additive-noise augmentation of speech corpora.

The augmented signal for an utterance is ``s * h + alpha * n[t + offset]``:
dry speech convolved with one or more room responses, plus a looped noise
recording scaled to hit a target A-weighted SNR.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.signal

from .analysis import Label, SegmentMap, a_weight, measure_snr
from .audio_io import audio_length, read_audio, write_audio
from .core import ImpulseResponse, Signal, convolve

log = logging.getLogger(__name__)

PLAN_FORMAT = "rirkit-plan"
PLAN_VERSION = 1
RNG_NAME = "PCG64"
SNR_TOLERANCE_DB = 0.5


class SwitchMode(enum.Enum):
    PER_FILE = "per-file"
    PER_SEGMENT = "per-seg"
    IN_SILENCE = "in-silence"


@dataclass(frozen=True)
class SwitchPolicy:
    """When to change the RIR within one utterance.

    ``per_segment(k)`` switches after every ``k`` speech segments,
    ``in_silence(s)`` at the midpoint of each pause of at least ``s`` seconds.
    """

    mode: SwitchMode = SwitchMode.PER_FILE
    segments_per_rir: int = 1
    min_silence_s: float = 3.0

    def __post_init__(self):
        if self.segments_per_rir < 1:
            raise ValueError("segments_per_rir must be at least 1")
        if not self.min_silence_s > 0:
            raise ValueError("min_silence_s must be positive")

    @classmethod
    def per_file(cls) -> "SwitchPolicy":
        return cls(SwitchMode.PER_FILE)

    @classmethod
    def per_segment(cls, k: int) -> "SwitchPolicy":
        return cls(SwitchMode.PER_SEGMENT, segments_per_rir=int(k))

    @classmethod
    def in_silence(cls, min_silence_s: float = 3.0) -> "SwitchPolicy":
        return cls(SwitchMode.IN_SILENCE, min_silence_s=float(min_silence_s))

    @classmethod
    def parse(cls, text: str) -> "SwitchPolicy":
        """Parse ``per-file``, ``per-seg=K`` or ``in-silence[=S]``."""
        name, _, arg = text.strip().partition("=")
        try:
            mode = SwitchMode(name)
        except ValueError:
            raise ValueError(f"unknown switch policy {text!r}") from None
        if mode is SwitchMode.PER_FILE:
            if arg:
                raise ValueError("per-file takes no argument")
            return cls.per_file()
        if mode is SwitchMode.PER_SEGMENT:
            if not arg:
                raise ValueError("per-seg needs a segment count, e.g. per-seg=3")
            return cls.per_segment(int(arg))
        return cls.in_silence(float(arg) if arg else 3.0)

    def __str__(self) -> str:
        if self.mode is SwitchMode.PER_FILE:
            return "per-file"
        if self.mode is SwitchMode.PER_SEGMENT:
            return f"per-seg={self.segments_per_rir}"
        return f"in-silence={self.min_silence_s!r}"


@dataclass(frozen=True)
class MixParams:
    """Noise weight ``alpha``, noise start ``offset`` and target SNR in dB."""

    alpha: float
    offset: int
    target_snr: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")


# --- Reverberation -----------------------------------------------------------

def reverberate(speech: Signal, rir: ImpulseResponse | Signal) -> Signal:
    """Full convolution of dry speech with a room response."""
    h = rir.signal if isinstance(rir, ImpulseResponse) else rir
    return convolve(speech, h)


def switch_points(policy: SwitchPolicy, segments: SegmentMap | None, n_samples: int,
                  sample_rate: int) -> list[int]:
    """Sample indices in ``(0, n_samples)`` where the RIR changes."""
    if policy.mode is SwitchMode.PER_FILE:
        return []
    if segments is None:
        raise ValueError(f"switch policy {policy} needs a segment map")
    if policy.mode is SwitchMode.PER_SEGMENT:
        speech = segments.of(Label.SPEECH)
        k = policy.segments_per_rir
        # Switch in the gap between the last segment of a group and the next one.
        points = [(speech[i - 1].end + speech[i].start) // 2 for i in range(k, len(speech), k)]
    else:
        min_len = policy.min_silence_s * sample_rate
        points = [(iv.start + iv.end) // 2 for iv in segments.of(Label.NONSPEECH)
                  if iv.length >= min_len]
    return sorted({p for p in points if 0 < p < n_samples})


def reverberate_partitioned(speech: Signal, rirs: list[ImpulseResponse | Signal],
                            boundaries: list[int]) -> Signal:
    """Convolve each partition with its own RIR and overlap-add the tails.

    ``rirs[i]`` applies to ``speech[boundaries[i-1]:boundaries[i]]``. Each
    partition is convolved in full, so reverberation that rings past a switch
    is kept rather than cut.
    """
    if len(rirs) != len(boundaries) + 1:
        raise ValueError(f"{len(boundaries)} boundaries need {len(boundaries) + 1} RIRs, "
                         f"got {len(rirs)}")
    hs = [r.signal if isinstance(r, ImpulseResponse) else r for r in rirs]
    for h in hs:
        if h.sample_rate != speech.sample_rate:
            raise ValueError("RIR and speech sample rates differ")
        if len(h) == 0:
            raise ValueError("empty RIR")
    edges = [0, *boundaries, len(speech)]
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("switch boundaries must be strictly increasing inside the signal")
    x = speech.samples
    if len(hs) == 1:
        return reverberate(speech, hs[0])
    n_out = max(edges[i + 1] + len(h) - 1 for i, h in enumerate(hs))
    y = np.zeros(n_out)
    for i, h in enumerate(hs):
        a, b = edges[i], edges[i + 1]
        part = scipy.signal.convolve(x[a:b], h.samples, mode="full", method="auto")
        y[a:a + part.size] += part
    return Signal(y, speech.sample_rate)


def reverberate_switched(speech: Signal, rirs: list[ImpulseResponse | Signal],
                         segments: SegmentMap | None, policy: SwitchPolicy) -> Signal:
    """Reverberate with RIRs changing at the policy's switch points.

    Partitions take the RIRs in order, cycling if there are more partitions
    than RIRs.
    """
    if not rirs:
        raise ValueError("at least one RIR is required")
    points = switch_points(policy, segments, len(speech), speech.sample_rate)
    chosen = [rirs[i % len(rirs)] for i in range(len(points) + 1)]
    return reverberate_partitioned(speech, chosen, points)


# --- Noise mixing ------------------------------------------------------------

def loop_noise(noise: Signal, n: int, offset: int) -> np.ndarray:
    """``n`` samples of ``noise`` starting at ``offset`` with cyclic wrap."""
    if len(noise) == 0:
        raise ValueError("empty noise signal")
    return noise.samples[(offset + np.arange(n)) % len(noise)]


def solve_alpha(wet: Signal, looped: np.ndarray, segments: SegmentMap, target_snr: float
                ) -> float:
    """Noise weight giving ``target_snr`` for ``wet + alpha * looped``.

    A-weighting is linear, so label powers of the mixture are quadratics in
    alpha; the SNR condition ``P_s = (1 + r) P_n`` is solved in closed form.
    """
    if not -30.0 < target_snr <= 60.0:
        raise ValueError(f"target SNR {target_snr} dB outside the measurable (-30, 60] range")
    fs = wet.sample_rate
    w = a_weight(wet).samples
    v = a_weight(Signal(looped, fs)).samples
    speech = segments.mask(Label.SPEECH, w.size)
    quiet = segments.mask(Label.NONSPEECH, w.size)
    if not speech.any() or not quiet.any():
        raise ValueError("segment map needs both speech and nonspeech samples")

    def moments(m):
        return np.mean(w[m] ** 2), np.mean(w[m] * v[m]), np.mean(v[m] ** 2)

    a_s, b_s, c_s = moments(speech)
    a_n, b_n, c_n = moments(quiet)
    if c_n == 0.0:
        raise ValueError("noise is silent over the nonspeech intervals")
    if a_s == 0.0:
        raise ValueError("reverberated speech is silent; no SNR can be reached")
    g = 1.0 + 10.0 ** (target_snr / 10.0)
    qa = c_s - g * c_n
    qb = 2.0 * (b_s - g * b_n)
    qc = a_s - g * a_n
    if qc <= 0.0:
        raise ValueError(f"target SNR {target_snr} dB exceeds what the clean speech reaches")
    if qa == 0.0:
        roots = [-qc / qb] if qb else []
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0:
            roots = []
        else:
            sq = math.sqrt(disc)
            # Numerically stable pair of roots.
            q = -0.5 * (qb + math.copysign(sq, qb))
            roots = [q / qa] + ([qc / q] if q != 0 else [])
    roots = sorted(r for r in roots if r > 0)
    if not roots:
        raise ValueError(f"target SNR {target_snr} dB is unreachable with this noise")
    return float(roots[0])


def mix_noise(wet_speech: Signal, noise: Signal, params: MixParams,
              segments: SegmentMap) -> Signal:
    """Add looped noise at ``params.offset``, scaled to ``params.target_snr``.

    ``params.alpha`` is ignored; the weight is solved from the signals and
    the result is checked with :func:`measure_snr`.
    """
    mixed, _ = mix_noise_verified(wet_speech, noise, params, segments)
    return mixed


def mix_noise_verified(wet_speech: Signal, noise: Signal, params: MixParams,
                       segments: SegmentMap) -> tuple[Signal, MixParams]:
    """As :func:`mix_noise`, also returning the parameters with solved alpha."""
    if wet_speech.sample_rate != noise.sample_rate:
        raise ValueError("speech and noise sample rates differ")
    if not np.any(noise.samples):
        raise ValueError("noise signal is silent")
    if params.offset >= len(noise):
        raise ValueError(f"offset {params.offset} beyond noise length {len(noise)}")
    looped = loop_noise(noise, len(wet_speech), params.offset)
    alpha = solve_alpha(wet_speech, looped, segments, params.target_snr)
    mixed = Signal(wet_speech.samples + alpha * looped, wet_speech.sample_rate)
    realized = measure_snr(mixed, segments)
    if abs(realized - params.target_snr) > SNR_TOLERANCE_DB:
        raise ArithmeticError(
            f"realized SNR {realized:.3f} dB misses target {params.target_snr:.3f} dB")
    return mixed, replace(params, alpha=alpha)


# --- Planning ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    segments: str | None = None


def read_manifest(path) -> list[ManifestEntry]:
    """Read ``id<TAB>path[<TAB>segment-file]`` lines; relative paths resolve
    against the manifest's directory."""
    path = Path(path)
    base = path.parent
    entries, seen = [], set()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
        if parts[0] in seen:
            raise ValueError(f"{path}:{lineno}: duplicate id {parts[0]!r}")
        seen.add(parts[0])
        resolved = [str(base / p) if p else None for p in parts[1:]]
        entries.append(ManifestEntry(parts[0], *resolved))
    return entries


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    lines = ["\t".join([e.id, e.path] + ([e.segments] if e.segments else [])) for e in entries]
    Path(path).write_text("".join(line + "\n" for line in lines))


@dataclass(frozen=True)
class PlanEntry:
    utt_id: str
    rir_ids: tuple[str, ...]
    switch_samples: tuple[int, ...]
    noise_id: str
    offset: int
    target_snr_db: float
    seed: int

    def __post_init__(self):
        if len(self.switch_samples) != len(self.rir_ids) or not self.rir_ids:
            raise ValueError("each RIR needs exactly one start sample")
        if self.switch_samples[0] != 0:
            raise ValueError("the first RIR must start at sample 0")


@dataclass(frozen=True)
class AugmentationPlan:
    entries: tuple[PlanEntry, ...]
    seed: int
    policy: SwitchPolicy = SwitchPolicy()
    snr_range: tuple[float, float] = (10.0, 20.0)
    utterances: tuple[ManifestEntry, ...] = ()
    rirs: tuple[ManifestEntry, ...] = ()
    noises: tuple[ManifestEntry, ...] = ()

    def to_text(self) -> str:
        lo, hi = self.snr_range
        out = [f"#{PLAN_FORMAT}\tversion={PLAN_VERSION}\trng={RNG_NAME}\tseed={self.seed}"
               f"\tpolicy={self.policy}\tsnr={lo!r}:{hi!r}"]
        for kind, items in (("utt", self.utterances), ("rir", self.rirs), ("noise", self.noises)):
            for e in items:
                out.append("\t".join([f"@{kind}", e.id, e.path] + ([e.segments] if e.segments else [])))
        for e in self.entries:
            rirs = ";".join(f"{r}@{s}" for r, s in zip(e.rir_ids, e.switch_samples))
            out.append("\t".join([e.utt_id, rirs, e.noise_id, str(e.offset),
                                  repr(float(e.target_snr_db)), str(e.seed)]))
        return "".join(line + "\n" for line in out)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "AugmentationPlan":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(f"#{PLAN_FORMAT}"):
            raise ValueError("not a plan file (missing header)")
        header = dict(kv.split("=", 1) for kv in lines[0].split("\t")[1:])
        if int(header.get("version", -1)) != PLAN_VERSION:
            raise ValueError(f"unsupported plan version {header.get('version')}")
        if header.get("rng") != RNG_NAME:
            raise ValueError(f"unsupported generator {header.get('rng')}")
        lo, hi = (float(v) for v in header["snr"].split(":"))
        res: dict[str, list[ManifestEntry]] = {"utt": [], "rir": [], "noise": []}
        entries = []
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            f = line.split("\t")
            if f[0].startswith("@"):
                res[f[0][1:]].append(ManifestEntry(*f[1:]))
                continue
            if len(f) != 6:
                raise ValueError(f"plan line {lineno}: expected 6 fields, got {len(f)}")
            pairs = [p.rsplit("@", 1) for p in f[1].split(";")]
            entries.append(PlanEntry(f[0], tuple(p[0] for p in pairs),
                                     tuple(int(p[1]) for p in pairs), f[2], int(f[3]),
                                     float(f[4]), int(f[5])))
        return cls(tuple(entries), int(header["seed"]), SwitchPolicy.parse(header["policy"]),
                   (lo, hi), tuple(res["utt"]), tuple(res["rir"]), tuple(res["noise"]))

    @classmethod
    def load(cls, path) -> "AugmentationPlan":
        return cls.from_text(Path(path).read_text())


class _BalancedPicker:
    """Draws ids in consecutive shuffled rounds, so usage counts never
    differ by more than one."""

    def __init__(self, ids: list[str], rng: np.random.Generator):
        self._ids = ids
        self._rng = rng
        self._queue: list[str] = []

    def __call__(self) -> str:
        if not self._queue:
            self._queue = [self._ids[i] for i in self._rng.permutation(len(self._ids))]
        return self._queue.pop(0)


def _load_segments(entry: ManifestEntry, sample_rate: int) -> SegmentMap | None:
    return SegmentMap.read(entry.segments, sample_rate) if entry.segments else None


def build_plan(corpus: list[ManifestEntry], rirs: list[ManifestEntry],
               noises: list[ManifestEntry], snr_range: tuple[float, float],
               policy: SwitchPolicy, seed: int) -> AugmentationPlan:
    """Assign RIRs, a noise, a target SNR and a noise offset to each utterance.

    RIRs and noises are dealt out in shuffled rounds from one seeded stream;
    each entry's SNR and offset come from its own stream derived from
    ``(seed, index)``.
    """
    if not corpus or not rirs or not noises:
        raise ValueError("corpus, RIR and noise manifests must all be non-empty")
    lo, hi = map(float, snr_range)
    if lo > hi:
        raise ValueError(f"empty SNR range {lo}:{hi}")
    rng = np.random.Generator(np.random.PCG64(seed))
    pick_rir = _BalancedPicker([r.id for r in rirs], rng)
    pick_noise = _BalancedPicker([n.id for n in noises], rng)
    noise_len = {n.id: audio_length(n.path)[0] for n in noises}
    entries = []
    for index, utt in enumerate(corpus):
        n, fs = audio_length(utt.path)
        segments = _load_segments(utt, fs)
        points = switch_points(policy, segments, n, fs)
        rir_ids = tuple(pick_rir() for _ in range(len(points) + 1))
        noise_id = pick_noise()
        seq = np.random.SeedSequence([seed, index])
        entry_rng = np.random.Generator(np.random.PCG64(seq))
        snr = float(entry_rng.uniform(lo, hi)) if hi > lo else lo
        if noise_len[noise_id] == 0:
            raise ValueError(f"noise {noise_id} is empty")
        offset = int(entry_rng.integers(noise_len[noise_id]))
        entries.append(PlanEntry(utt.id, rir_ids, (0, *points), noise_id, offset, snr,
                                 int(seq.generate_state(1)[0])))
    return AugmentationPlan(tuple(entries), seed, policy, (lo, hi), tuple(corpus),
                            tuple(rirs), tuple(noises))


# --- Execution ---------------------------------------------------------------

@dataclass
class ExecutionReport:
    outputs: dict[str, Path] = field(default_factory=dict)
    realized_snr: dict[str, float] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    provenance: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def execute_entry(entry: PlanEntry, plan: AugmentationPlan, outdir: Path) -> tuple[Path, float]:
    utts = {e.id: e for e in plan.utterances}
    rirs = {e.id: e for e in plan.rirs}
    noises = {e.id: e for e in plan.noises}
    utt = utts[entry.utt_id]
    speech = read_audio(utt.path)
    segments = _load_segments(utt, speech.sample_rate)
    if segments is None:
        raise ValueError(f"utterance {utt.id} has no segment file; SNR cannot be set")
    hs = [read_audio(rirs[r].path) for r in entry.rir_ids]
    wet = reverberate_partitioned(speech, hs, list(entry.switch_samples[1:]))
    noise = read_audio(noises[entry.noise_id].path)
    params = MixParams(0.0, entry.offset, entry.target_snr_db)
    mixed, _ = mix_noise_verified(wet, noise, params, segments)
    realized = measure_snr(mixed, segments)
    out = write_audio(outdir / f"{entry.utt_id}.wav", mixed)
    return out, realized


def execute_plan(plan: AugmentationPlan, outdir) -> ExecutionReport:
    """Render every plan entry to ``outdir`` and write ``provenance.tsv``.

    A failing entry is logged and recorded; the remaining entries still run.
    Outputs depend only on the plan, so reruns are byte-identical.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report = ExecutionReport()
    lines = [f"#{PLAN_FORMAT}-provenance\tversion={PLAN_VERSION}\trng={RNG_NAME}"
             f"\tseed={plan.seed}\tpolicy={plan.policy}"]
    for entry in plan.entries:
        rirs = ";".join(f"{r}@{s}" for r, s in zip(entry.rir_ids, entry.switch_samples))
        fields = [entry.utt_id, rirs, entry.noise_id, str(entry.offset),
                  repr(float(entry.target_snr_db)), str(entry.seed)]
        try:
            path, realized = execute_entry(entry, plan, outdir)
        except Exception as exc:  # entry-level failure, keep going
            log.error("entry %s failed: %s", entry.utt_id, exc)
            report.failures[entry.utt_id] = f"{type(exc).__name__}: {exc}"
            lines.append("\t".join(fields + ["FAILED", report.failures[entry.utt_id]]))
            continue
        report.outputs[entry.utt_id] = path
        report.realized_snr[entry.utt_id] = realized
        lines.append("\t".join(fields + [f"{realized:.4f}", _sha256(path)]))
    report.provenance = outdir / "provenance.tsv"
    report.provenance.write_text("".join(line + "\n" for line in lines))
    return report
