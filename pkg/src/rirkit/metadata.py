"""Placement metadata for measured RIRs and tag-based selection of RIR sets.

Coordinates are Cartesian ``(depth, width, height)`` in metres. Spherical
coordinates are ``(distance, azimuth, elevation)``: azimuth is measured in
the horizontal plane from the depth axis towards the width axis, elevation
up from the horizontal plane. Orientations are ``(azimuth, elevation)`` of
the device's main axis, in radians.

Metadata files are sectioned ``key = value`` text::

    [room]
    id = Q301
    dimensions = 10.7, 6.9, 2.6

    [speaker 1]
    position = 1.0, 3.4, 1.5
    orientation = 0.0, 0.0

    [mic 1]
    position = 3.0, 3.4, 1.2
    orientation = 3.14159, 0.0
    visible = yes
    occlusion = open
    rir.1 = rirs/spk1_mic1.wav

``occlusion`` is one of ``open``, ``partly_boxed``, ``fully_boxed``. A
``rir.N`` key gives the RIR file for speaker ``N``; one record is made per
speaker/microphone pair. Other keys are kept as opaque strings.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

F2F_CONE = math.radians(30.0)


class Occlusion(enum.Enum):
    OPEN = "open"
    PARTLY_BOXED = "partly_boxed"
    FULLY_BOXED = "fully_boxed"


def cartesian_to_spherical(p, origin=(0.0, 0.0, 0.0)) -> tuple[float, float, float]:
    """``(distance, azimuth, elevation)`` of ``p`` seen from ``origin``.

    At ``p == origin`` all three are 0; straight up or down the azimuth is 0.
    """
    d = np.asarray(p, dtype=float) - np.asarray(origin, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("coordinates must be finite")
    x, y, z = (float(v) for v in d)
    horiz = math.hypot(x, y)
    dist = math.sqrt(horiz * horiz + z * z)
    if dist == 0.0:
        return 0.0, 0.0, 0.0
    azimuth = math.atan2(y, x) if horiz > 0.0 else 0.0
    return dist, azimuth, math.atan2(z, horiz)


def spherical_to_cartesian(distance: float, azimuth: float, elevation: float,
                           origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    ce = math.cos(elevation)
    return np.asarray(origin, dtype=float) + distance * np.array(
        [ce * math.cos(azimuth), ce * math.sin(azimuth), math.sin(elevation)])


def direction(orientation) -> np.ndarray:
    return spherical_to_cartesian(1.0, *orientation)


@dataclass(frozen=True)
class Placement:
    position: tuple[float, float, float]
    orientation: tuple[float, float] = (0.0, 0.0)
    label: str = ""

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        orient = tuple(float(v) for v in self.orientation)
        if len(pos) != 3 or not all(map(math.isfinite, pos)):
            raise ValueError(f"position must be three finite numbers, got {self.position}")
        if len(orient) != 2:
            raise ValueError("orientation must be (azimuth, elevation)")
        az, el = orient
        if not -math.pi <= az <= math.pi or not -math.pi / 2 <= el <= math.pi / 2:
            raise ValueError(f"orientation {orient} outside azimuth [-pi, pi], "
                             "elevation [-pi/2, pi/2]")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", orient)

    @property
    def spherical(self) -> tuple[float, float, float]:
        return cartesian_to_spherical(self.position)


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    c = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.acos(max(-1.0, min(1.0, c)))


@dataclass(frozen=True)
class RirRecord:
    rir_id: str
    room_id: str
    mic: Placement
    speaker: Placement
    visible: bool = False
    occlusion: Occlusion = Occlusion.OPEN
    path: str | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(np.subtract(self.mic.position, self.speaker.position)))

    @property
    def face_to_face(self) -> bool:
        """Both devices point at each other within a 30 degree cone."""
        to_speaker = np.subtract(self.speaker.position, self.mic.position)
        if not np.any(to_speaker):
            return False
        return (_angle(direction(self.mic.orientation), to_speaker) <= F2F_CONE
                and _angle(direction(self.speaker.orientation), -to_speaker) <= F2F_CONE)


def relative_to_speaker(record: RirRecord) -> Placement:
    """Microphone placement with the loudspeaker position as origin."""
    rel = np.subtract(record.mic.position, record.speaker.position)
    return Placement(tuple(rel), record.mic.orientation, record.mic.label)


# --- Tag filtering -------------------------------------------------------------

_OCCLUSION_TAGS = {"open": Occlusion.OPEN, "partly": Occlusion.PARTLY_BOXED,
                   "fully": Occlusion.FULLY_BOXED}
_CT = re.compile(r"ct(\d+)m")


class TagError(ValueError):
    def __init__(self, query: str, index: int, offset: int, atom: str):
        self.index = index
        self.offset = offset
        super().__init__(f"malformed tag atom {atom!r} (atom {index + 1}, column {offset + 1}) "
                         f"in {query!r}")


def parse_tags(query: str):
    """Compile ``atom.atom...`` into a list of record predicates."""
    preds = []
    offset = 0
    for i, atom in enumerate(query.split(".")):
        m = _CT.fullmatch(atom)
        if m:
            limit = float(m.group(1))
            preds.append(lambda r, x=limit: 1.0 <= r.distance <= x)
        elif atom == "vis":
            preds.append(lambda r: r.visible)
        elif atom == "f2f":
            preds.append(lambda r: r.face_to_face)
        elif atom in _OCCLUSION_TAGS:
            preds.append(lambda r, o=_OCCLUSION_TAGS[atom]: r.occlusion is o)
        else:
            raise TagError(query, i, offset, atom)
        offset += len(atom) + 1
    return preds


def filter_rirs(records: list[RirRecord], tags: str) -> list[RirRecord]:
    """Records matching every atom of a query such as ``vis.ct3m.f2f``.

    ``ctXm`` keeps distances from 1 m to X m inclusive.
    """
    preds = parse_tags(tags)
    return [r for r in records if all(p(r) for p in preds)]


# --- File format -----------------------------------------------------------------

_SECTION = re.compile(r"\[\s*(room|speaker|mic)(?:\s+(\S+))?\s*\]")
_TRUE = {"yes", "true", "1", "on"}
_FALSE = {"no", "false", "0", "off"}


def _floats(text: str, n: int, where: str) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != n:
        raise ValueError(f"{where}: expected {n} numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def parse_metadata(text: str, base: Path | None = None, source: str = "<metadata>"
                   ) -> list[RirRecord]:
    sections: list[tuple[str, str | None, dict, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.fullmatch(line)
        if m:
            sections.append((m.group(1), m.group(2), {}, lineno))
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value' or a [section]")
        if not sections:
            raise ValueError(f"{source}:{lineno}: key outside any section")
        key, value = (s.strip() for s in line.split("=", 1))
        sections[-1][2][key] = (value, lineno)

    room_id = ""
    speakers: dict[str, Placement] = {}
    mics: list[tuple[str, dict]] = []
    for kind, name, kv, lineno in sections:
        where = f"{source}:{lineno}"
        if kind == "room":
            room_id = kv.get("id", ("", 0))[0]
            continue
        if name is None:
            raise ValueError(f"{where}: [{kind}] section needs an identifier")
        if "position" not in kv:
            raise ValueError(f"{where}: {kind} {name} has no position")
        pos = _floats(kv["position"][0], 3, f"{source}:{kv['position'][1]}")
        orient = (_floats(kv["orientation"][0], 2, f"{source}:{kv['orientation'][1]}")
                  if "orientation" in kv else (0.0, 0.0))
        place = Placement(pos, orient, f"{kind}{name}")
        if kind == "speaker":
            speakers[name] = place
        else:
            mics.append((name, {"placement": place, "kv": kv}))

    records = []
    for name, info in mics:
        kv = info["kv"]
        vis_raw = kv.get("visible", ("no", 0))
        vis = vis_raw[0].lower()
        if vis not in _TRUE | _FALSE:
            raise ValueError(f"{source}:{vis_raw[1]}: visible must be yes or no, got {vis!r}")
        occ_raw = kv.get("occlusion", ("open", 0))
        try:
            occ = Occlusion(occ_raw[0].lower())
        except ValueError:
            raise ValueError(f"{source}:{occ_raw[1]}: unknown occlusion {occ_raw[0]!r}") from None
        extra = {k: v for k, (v, _) in kv.items()
                 if k not in ("position", "orientation", "visible", "occlusion")
                 and not k.startswith("rir.")}
        for spk, splace in speakers.items():
            rel = kv.get(f"rir.{spk}", (None, 0))[0]
            path = str(base / rel) if rel and base is not None else rel
            records.append(RirRecord(f"{room_id}_spk{spk}_mic{name}", room_id,
                                     info["placement"], splace, vis in _TRUE, occ, path, extra))
    return records


def load_metadata_dir(directory) -> list[RirRecord]:
    """Parse every ``*.txt`` metadata file in ``directory`` (sorted by name)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"metadata directory {directory} not found")
    records = []
    for f in sorted(directory.glob("*.txt")):
        records.extend(parse_metadata(f.read_text(), f.parent, str(f)))
    return records
