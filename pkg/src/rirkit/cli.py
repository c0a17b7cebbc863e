"""Command-line interface: ``rirkit <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import re
import sys
from pathlib import Path

from . import analysis, augmentation, chain, estimation, excitation, ism, metadata, postprocess
from .audio_io import read_audio, write_audio
from .core import ImpulseResponse, Origin

log = logging.getLogger("rirkit")


def _floats(text: str) -> list[float]:
    return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]


# --- gen-excitation -------------------------------------------------------------

def _spec_path(out: Path) -> Path:
    return out.with_suffix(".json")


def cmd_gen_excitation(args) -> int:
    if args.method in ("mls", "irs"):
        spec = excitation.MlsSpec(args.order, args.repetitions, args.rate)
        sig = (excitation.generate_mls if args.method == "mls" else excitation.generate_irs)(spec)
        desc = {"method": args.method, **dataclasses.asdict(spec)}
    else:
        spec = excitation.EssSpec(args.f1, args.f2, args.duration, args.tail, args.rate, args.fade)
        sig = excitation.generate_ess(spec)
        desc = {"method": "ess", **dataclasses.asdict(spec)}
    write_audio(args.out, sig, args.format)
    sidecar = Path(args.spec_out) if args.spec_out else _spec_path(Path(args.out))
    sidecar.write_text(json.dumps(desc, indent=2) + "\n")
    print(f"wrote {args.out} ({len(sig)} samples) and {sidecar}")
    return 0


def load_excitation_spec(path) -> excitation.MlsSpec | excitation.EssSpec:
    desc = json.loads(Path(path).read_text())
    method = desc.pop("method", None)
    if method in ("mls", "irs"):
        return excitation.MlsSpec(**desc)
    if method == "ess":
        return excitation.EssSpec(**desc)
    raise ValueError(f"{path}: unknown excitation method {method!r}")


# --- estimate-rir -----------------------------------------------------------------

def cmd_estimate_rir(args) -> int:
    spec = load_excitation_spec(args.spec)
    rec = read_audio(args.recording)
    if args.method == "mls":
        if not isinstance(spec, excitation.MlsSpec):
            raise ValueError("--method mls needs an MLS spec")
        mode = args.compensate_drift
        if mode == "auto":
            drift = estimation.estimate_drift(rec, spec, start=args.start)
            log.info("clock ratio %.9f (%.2f ppm)", drift.ratio, drift.ppm)
            rec = estimation.compensate_drift(rec, drift)
        elif mode.startswith("ratio="):
            drift = estimation.DriftEstimate(float(mode[6:]), math.inf)
            rec = estimation.compensate_drift(rec, drift)
        elif mode != "off":
            raise ValueError(f"--compensate-drift must be auto, off or ratio=<r>, got {mode!r}")
        rir = estimation.estimate_rir_mls(rec, spec, None, args.rir_length, start=args.start)
    else:
        if not isinstance(spec, excitation.EssSpec):
            raise ValueError("--method ess needs an ESS spec")
        rir = estimation.estimate_rir_ess(rec, spec, args.rir_length)
    write_audio(args.out, rir.signal, args.format)
    print(f"wrote {args.out}: {len(rir)} samples, onset {rir.onset_sample}")
    return 0


# --- simulate-rir -----------------------------------------------------------------

def parse_room(text: str) -> dict:
    """Room from ``10.7x6.9x2.6`` (``x`` or ``×``) or a ``key = value`` file."""
    path = Path(text)
    if path.is_file():
        kv = {}
        for raw in path.read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                key, _, value = line.partition("=")
                kv[key.strip()] = value.strip()
        out = {"dimensions": parse_dimensions(kv["dimensions"])}
        if "betas" in kv:
            out["betas"] = tuple(_floats(kv["betas"]))
        if "rt60" in kv:
            out["rt60"] = float(kv["rt60"])
        if "speed_of_sound" in kv:
            out["speed_of_sound"] = float(kv["speed_of_sound"])
        return out
    return {"dimensions": parse_dimensions(text)}


def parse_dimensions(text: str) -> tuple[float, float, float]:
    parts = [p for p in re.split(r"\s*[x×,]\s*|\s+", text.strip()) if p]
    if len(parts) != 3:
        raise ValueError(f"room dimensions need three values, got {text!r}")
    return tuple(float(p) for p in parts)


def parse_mic(text: str) -> ism.MicSpec:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) not in (3, 5, 6):
        raise ValueError("--mic takes x,y,z[,az,el[,pattern]]")
    pos = tuple(float(p) for p in parts[:3])
    orient = (float(parts[3]), float(parts[4])) if len(parts) >= 5 else (0.0, 0.0)
    pattern = ism.Directivity.parse(parts[5]) if len(parts) == 6 else ism.Directivity.OMNIDIRECTIONAL
    return ism.MicSpec(pos, orient, pattern)


def cmd_simulate_rir(args) -> int:
    room_cfg = parse_room(args.room)
    c = room_cfg.get("speed_of_sound", args.speed_of_sound)
    dims = room_cfg["dimensions"]
    rt60 = args.rt60 if args.rt60 is not None else room_cfg.get("rt60")
    betas = tuple(_floats(args.betas)) if args.betas else room_cfg.get("betas")
    if rt60 is not None and betas is not None:
        raise ValueError("give either --rt60 or --betas, not both")
    if rt60 is not None:
        room = ism.RoomSpec.with_rt60(dims, rt60, c)
    elif betas is not None:
        room = ism.RoomSpec(dims, betas, c)
    else:
        raise ValueError("one of --rt60 or --betas is required")
    source = ism.SourceSpec(tuple(_floats(args.source)))
    rir = ism.simulate_rir_ism(room, source, parse_mic(args.mic), args.length, args.rate,
                               args.max_order)
    write_audio(args.out, rir.signal, args.format)
    print(f"wrote {args.out}: onset {rir.onset_sample}, betas {', '.join(f'{b:.4f}' for b in room.betas)}")
    return 0


# --- analyze ------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    sig = read_audio(args.rir)
    decay = analysis.schroeder_decay(sig)
    if args.report == "rt30":
        print(f"rt30_s\t{analysis.estimate_rt30(decay):.4f}")
    else:
        step = max(1, int(round(args.step * sig.sample_rate)))
        lines = [f"{t:.6f}\t{v:.3f}" for t, v in zip(decay.times[::step], decay.values[::step])]
        text = "time_s\tdecay_db\n" + "\n".join(lines) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    return 0


def cmd_analyze_snr(args) -> int:
    sig = read_audio(args.audio)
    segments = analysis.SegmentMap.read(args.segments, sig.sample_rate)
    print(f"snr_db\t{analysis.measure_snr(sig, segments):.3f}")
    return 0


# --- postprocess ---------------------------------------------------------------------

def cmd_postprocess(args) -> int:
    sig = read_audio(args.rir)
    rir = ImpulseResponse(sig, origin=Origin.LOADED)
    lines = []
    if args.passivate:
        rir, rep = postprocess.passivate(rir)
        lines += [f"passivation_applied\t{str(rep.applied).lower()}",
                  f"scale_factor\t{rep.scale_factor!r}",
                  f"peak_magnitude_before\t{rep.peak_magnitude_before!r}"]
    if args.shift != "off":
        delay = "auto" if args.shift == "auto" else int(args.shift)
        rir, rep = postprocess.compensate_delay(rir, delay, args.threshold_db)
        lines += [f"shift_requested\t{'auto' if rep.requested is None else rep.requested}",
                  f"shift_applied\t{rep.applied}", f"onset\t{rep.onset}"]
    write_audio(args.out, rir.signal, args.format)
    text = "".join(line + "\n" for line in lines)
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# --- simulate-measurement -------------------------------------------------------------

def parse_nonlinearity(text: str) -> float:
    if text == "none":
        return 0.0
    name, _, value = text.partition(":")
    if name != "cubic" or not value:
        raise ValueError(f"--nonlinearity must be none or cubic:C, got {text!r}")
    return float(value)


def cmd_simulate_measurement(args) -> int:
    exc = read_audio(args.excitation)
    rir = ImpulseResponse(read_audio(args.rir))
    noise = -math.inf if args.noise_db is None else args.noise_db
    spec = chain.ChainSpec(rir, args.drift_ppm, noise, parse_nonlinearity(args.nonlinearity))
    rec = chain.simulate_measurement(exc, spec, args.seed)
    write_audio(args.out, rec, args.format)
    print(f"wrote {args.out} ({len(rec)} samples)")
    return 0


# --- plan / run ----------------------------------------------------------------------

def parse_snr_range(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"--snr must be LOW:HIGH, got {text!r}")
    return float(lo), float(hi)


def cmd_plan(args) -> int:
    plan = augmentation.build_plan(
        augmentation.read_manifest(args.corpus), augmentation.read_manifest(args.rirs),
        augmentation.read_manifest(args.noises), parse_snr_range(args.snr),
        augmentation.SwitchPolicy.parse(args.policy), args.seed)
    plan.save(args.out)
    print(f"wrote {args.out} ({len(plan.entries)} entries)")
    return 0


def cmd_run(args) -> int:
    plan = augmentation.AugmentationPlan.load(args.plan)
    report = augmentation.execute_plan(plan, args.outdir)
    print(f"{len(report.outputs)} written, {len(report.failures)} failed; "
          f"provenance in {report.provenance}")
    for utt, err in report.failures.items():
        print(f"failed\t{utt}\t{err}", file=sys.stderr)
    return 0 if report.ok else 1


# --- rirs list ------------------------------------------------------------------------

def cmd_rirs_list(args) -> int:
    records = metadata.load_metadata_dir(args.meta)
    if args.filter:
        records = metadata.filter_rirs(records, args.filter)
    if args.format == "manifest":
        for r in records:
            if r.path is None:
                log.warning("%s has no RIR file; left out of the manifest", r.rir_id)
                continue
            print(f"{r.rir_id}\t{r.path}")
    else:
        print("rir_id\troom\tdistance_m\tvisible\tf2f\tocclusion")
        for r in records:
            print(f"{r.rir_id}\t{r.room_id}\t{r.distance:.3f}\t{str(r.visible).lower()}\t"
                  f"{str(r.face_to_face).lower()}\t{r.occlusion.value}")
    return 0


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rirkit", description="Room impulse response toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def audio_out(sp):
        sp.add_argument("--out", required=True)
        sp.add_argument("--format", choices=["float32", "float64", "int16"], default="float32")

    g = sub.add_parser("gen-excitation", help="write an MLS, IRS or sweep excitation")
    g.add_argument("--method", choices=["mls", "irs", "ess"], required=True)
    g.add_argument("--order", type=int, default=18)
    g.add_argument("--repetitions", type=int, default=32)
    g.add_argument("--f1", type=float, default=20.0)
    g.add_argument("--f2", type=float, default=None)
    g.add_argument("--duration", type=float, default=10.0)
    g.add_argument("--tail", type=float, default=2.0)
    g.add_argument("--fade", type=float, default=0.05)
    g.add_argument("--rate", type=int, default=48000)
    g.add_argument("--spec-out", default=None, help="spec sidecar (default: OUT with .json)")
    audio_out(g)
    g.set_defaults(func=cmd_gen_excitation)

    e = sub.add_parser("estimate-rir", help="deconvolve a recorded excitation")
    e.add_argument("--method", choices=["mls", "ess"], required=True)
    e.add_argument("--recording", required=True)
    e.add_argument("--spec", required=True, help="JSON sidecar written by gen-excitation")
    e.add_argument("--rir-length", type=int, required=True)
    e.add_argument("--compensate-drift", default="auto", help="auto, off or ratio=<r>")
    e.add_argument("--start", type=int, default=0, help="sample where the MLS train starts")
    audio_out(e)
    e.set_defaults(func=cmd_estimate_rir)

    s = sub.add_parser("simulate-rir", help="image-source RIR of a shoebox room")
    s.add_argument("--room", required=True, help="LxWxH in metres, or a room config file")
    s.add_argument("--source", required=True, help="x,y,z")
    s.add_argument("--mic", required=True, help="x,y,z[,az,el[,pattern]]")
    s.add_argument("--rt60", type=float, default=None)
    s.add_argument("--betas", default=None, help="one or six reflection coefficients")
    s.add_argument("--length", type=int, required=True)
    s.add_argument("--rate", type=int, default=16000)
    s.add_argument("--max-order", type=int, default=None)
    s.add_argument("--speed-of-sound", type=float, default=ism.SPEED_OF_SOUND)
    audio_out(s)
    s.set_defaults(func=cmd_simulate_rir)

    a = sub.add_parser("analyze", help="RT30 or Schroeder decay of an RIR")
    a.add_argument("--rir", required=True)
    a.add_argument("--report", choices=["rt30", "decay"], default="rt30")
    a.add_argument("--step", type=float, default=0.001, help="decay report spacing in s")
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_analyze)

    n = sub.add_parser("analyze-snr", help="A-weighted SNR against a segmentation")
    n.add_argument("--audio", required=True)
    n.add_argument("--segments", required=True)
    n.set_defaults(func=cmd_analyze_snr)

    pp = sub.add_parser("postprocess", help="passivate and delay-compensate an RIR")
    pp.add_argument("--rir", required=True)
    pp.add_argument("--passivate", action="store_true")
    pp.add_argument("--shift", default="off", help="auto, N samples or off")
    pp.add_argument("--threshold-db", type=float, default=postprocess.DEFAULT_ONSET_DB)
    pp.add_argument("--report", default=None)
    audio_out(pp)
    pp.set_defaults(func=cmd_postprocess)

    m = sub.add_parser("simulate-measurement", help="synthetic recording through a room")
    m.add_argument("--excitation", required=True)
    m.add_argument("--rir", required=True)
    m.add_argument("--drift-ppm", type=float, default=0.0)
    m.add_argument("--noise-db", type=float, default=None, help="omit for a noiseless chain")
    m.add_argument("--nonlinearity", default="none", help="none or cubic:C")
    m.add_argument("--seed", type=int, default=0)
    audio_out(m)
    m.set_defaults(func=cmd_simulate_measurement)

    pl = sub.add_parser("plan", help="build a seeded augmentation plan")
    pl.add_argument("--corpus", required=True)
    pl.add_argument("--rirs", required=True)
    pl.add_argument("--noises", required=True)
    pl.add_argument("--snr", default="10:20")
    pl.add_argument("--policy", default="per-file", help="per-file, per-seg=K or in-silence=S")
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plan)

    r = sub.add_parser("run", help="execute an augmentation plan")
    r.add_argument("--plan", required=True)
    r.add_argument("--outdir", required=True)
    r.set_defaults(func=cmd_run)

    rl = sub.add_parser("rirs", help="query RIR metadata")
    rsub = rl.add_subparsers(dest="rirs_command", required=True)
    ls = rsub.add_parser("list", help="list RIRs matching a tag filter")
    ls.add_argument("--meta", required=True, help="directory of metadata .txt files")
    ls.add_argument("--filter", default=None, help="e.g. vis.ct3m.f2f")
    ls.add_argument("--format", choices=["table", "manifest"], default="table")
    ls.set_defaults(func=cmd_rirs_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"rirkit {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
