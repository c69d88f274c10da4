"""Command-line entry point: ``vtcap <command> ...``.

Reports are printed as ``key = value`` lines. Exit status is 0 on success,
1 on an operational error (bad file, failed fit, ...) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .align import DEFAULT_TOLERANCE_US
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .clock import ClockFitError
from .config import ConfigError, load_config
from .episode import EpisodeError, EpisodeWriter, compute_stats, read_episode
from .fusion import (
    ShapeMismatch,
    embed_dim,
    fuse,
    init_params,
    reconstruct,
    reconstruction_loss,
    tactile_encode,
)
from .pipeline import sync_session
from .preprocess import MASK_PROB, RATIO_RANGE, apply_mask, colormap, draw_mask, stack_pads
from .recording import RecordingError, load_session, save_session
from .sim import InvalidSpec, SessionSpec, simulate_session
from .wire import Pad

OPERATIONAL_ERRORS = (
    OSError, EpisodeError, RecordingError, ConfigError, CheckpointError,
    ClockFitError, InvalidSpec, ShapeMismatch,
)


def emit(doc, out=None):
    out = out or sys.stdout
    for k, v in doc.items():
        if isinstance(v, float):
            v = repr(v)
        out.write(f"{k} = {v}\n")


def _digest(values):
    return hashlib.sha256(np.asarray(values, dtype="<f8").tobytes()).hexdigest()[:16]


# commands

def cmd_simulate(args):
    spec = load_config(args.config) if args.config else SessionSpec()
    if args.seed is not None:
        spec = replace(spec, rng_seed=args.seed)
    if args.duration_s is not None:
        spec = replace(spec, duration_s=args.duration_s)
    session = simulate_session(spec)
    save_session(args.out, session)
    emit({
        "out": args.out,
        "duration_s": spec.duration_s,
        "rng_seed": spec.rng_seed,
        "frames_left": len(session.truth.tactile_emit_us[Pad.LEFT]),
        "frames_right": len(session.truth.tactile_emit_us[Pad.RIGHT]),
        "video_frames": len(session.video),
        "fiducial_codes": len(session.truth.codes_displayed),
    })
    return 0


def cmd_decode(args):
    from .clock import fit_clock_model
    from .fiducial import extract_code_samples
    from .wire import decode_stream

    streams, _, video = load_session(args.input)
    doc = {}
    for pad in (Pad.LEFT, Pad.RIGHT):
        name = pad.name.lower()
        _, d = decode_stream(streams[pad])
        doc.update({
            f"{name}.bytes": len(streams[pad]),
            f"{name}.frames_ok": d.frames_ok,
            f"{name}.frames_crc_fail": d.frames_crc_fail,
            f"{name}.bytes_skipped_resync": d.bytes_skipped_resync,
            f"{name}.trailing_bytes": d.trailing_bytes,
            f"{name}.seq_gaps": len(d.seq_gaps),
        })
    samples, tally = extract_code_samples(video)
    doc.update({
        "video.frames": tally.frames_seen,
        "video.no_fiducial": tally.no_fiducial,
        "video.bad_sync": tally.bad_sync,
        "video.unrecoverable": tally.unrecoverable,
        "video.code_samples": tally.samples,
    })
    if len(samples) >= 2:
        m = fit_clock_model([(i, c.host_ts_us) for i, c in samples])
        doc.update({"clock.slope_us_per_frame": m.slope_us_per_frame,
                    "clock.residual_rms_us": m.residual_rms_us,
                    "clock.outliers": m.outlier_count})
    emit(doc)
    return 0


def cmd_sync(args):
    streams, receipts, video = load_session(args.input)
    res = sync_session(streams, receipts, video, args.tolerance_us,
                       refine=not args.no_refine, restamp=args.restamp)
    m = res.video_model
    meta = {
        "source": str(args.input),
        "tolerance_us": args.tolerance_us,
        "clock.method": m.method,
        "clock.slope_us_per_frame": repr(m.slope_us_per_frame),
        "clock.intercept_us": repr(m.intercept_us),
        "clock.residual_rms_us": repr(m.residual_rms_us),
        **{f"report.{k}": v for k, v in res.report.as_dict().items()},
    }
    cfg = Path(args.input) / "session.cfg"
    if cfg.exists():
        for line in cfg.read_text(encoding="utf-8").splitlines():
            k, _, v = line.partition("=")
            if k.strip() and k.strip() != "contact":
                meta[f"cfg.{k.strip()}"] = v.strip()
    with EpisodeWriter(args.out, meta) as w:
        for p in res.pairs:
            w.append(p)
    doc = {"out": args.out, "clock.method": m.method,
           "clock.slope_us_per_frame": m.slope_us_per_frame,
           "clock.inliers": m.inlier_count, "clock.outliers": m.outlier_count}
    doc.update(res.report.as_dict())
    emit(doc)
    return 0


def _rewrite(src, dst, meta_extra, fn):
    ep = read_episode(src)
    meta = dict(ep.meta)
    meta.update(meta_extra)
    with EpisodeWriter(dst, meta) as w:
        for p in ep.pairs:
            w.append(fn(p))
    return ep


def cmd_pack(args):
    def add_image(p):
        img = stack_pads(p.left, p.right).astype(np.float32)
        return replace(p, image=img)

    ep = _rewrite(args.input, args.out, {"packed.images": "1"}, add_image)
    emit({"out": args.out, "pairs": len(ep.pairs), "images": len(ep.pairs)})
    return 0


def _check_mask_policy(args):
    if not 0.0 <= args.mask_prob <= 1.0:
        raise ValueError("--mask-prob must be in [0, 1]")
    if not 0.0 <= args.ratio_min <= args.ratio_max <= 1.0:
        raise ValueError("need 0 <= --ratio-min <= --ratio-max <= 1")


def cmd_mask(args):
    _check_mask_policy(args)
    rng = np.random.default_rng(args.seed)
    policy = dict(mask_prob=args.mask_prob, ratio_range=(args.ratio_min, args.ratio_max))
    counts = []

    def add_mask(p):
        m = draw_mask(rng, **policy)
        counts.append(m.masked_count)
        return replace(p, mask=m)

    meta = {"mask.seed": args.seed, "mask.prob": args.mask_prob,
            "mask.ratio_min": args.ratio_min, "mask.ratio_max": args.ratio_max}
    ep = _rewrite(args.input, args.out, meta, add_mask)
    counts = np.asarray(counts)
    emit({
        "out": args.out,
        "pairs": len(ep.pairs),
        "unmasked": int(np.sum(counts == 0)),
        "masked_count_min": int(counts[counts > 0].min()) if np.any(counts > 0) else 0,
        "masked_count_max": int(counts.max()) if counts.size else 0,
    })
    return 0


def image_embedding(seed, frame_index, d):
    """Stand-in for the vision backbone output: a seeded Gaussian vector per frame."""
    return np.random.default_rng([seed, frame_index]).standard_normal(d)


def cmd_fuse_eval(args):
    _check_mask_policy(args)
    params = load_checkpoint(args.checkpoint) if args.checkpoint else init_params(args.seed)
    if args.save_checkpoint:
        save_checkpoint(args.save_checkpoint, params)
    d = embed_dim(params)
    ep = read_episode(args.input)
    pairs = ep.pairs if args.limit is None else ep.pairs[: args.limit]
    rng = np.random.default_rng(args.seed)
    losses = []
    for p in pairs:
        target = p.image.astype(np.float64) if p.image is not None else stack_pads(p.left, p.right)
        mask = p.mask if p.mask is not None else draw_mask(
            rng, args.mask_prob, (args.ratio_min, args.ratio_max))
        z_tac = tactile_encode(apply_mask(colormap(target), mask), params)
        z = fuse(z_tac, image_embedding(args.seed, p.video.frame_index, d), params)
        losses.append(reconstruction_loss(target, reconstruct(z, params)))
    losses = np.asarray(losses)
    emit({
        "pairs": len(losses),
        "loss_mean": float(losses.mean()) if losses.size else float("nan"),
        "loss_min": float(losses.min()) if losses.size else float("nan"),
        "loss_max": float(losses.max()) if losses.size else float("nan"),
        "loss_finite": bool(np.all(np.isfinite(losses))),
        "loss_digest": _digest(losses),
    })
    return 0


def cmd_inspect(args):
    stats = compute_stats(args.paths)
    emit(stats.as_dict())
    return 1 if stats.failures else 0


def cmd_bench(args):
    report = bench_mod.run(args.frames, seed=args.seed or 0, repeats=args.repeats,
                           tolerance_us=args.tolerance_us)
    report["target"] = args.target
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    emit(report)
    return 0


# parser

def build_parser():
    ap = argparse.ArgumentParser(prog="vtcap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        return p

    def mask_flags(p):
        p.add_argument("--mask-prob", type=float, default=MASK_PROB)
        p.add_argument("--ratio-min", type=float, default=RATIO_RANGE[0])
        p.add_argument("--ratio-max", type=float, default=RATIO_RANGE[1])

    p = add("simulate", cmd_simulate, "simulate a capture session into a directory")
    p.add_argument("--config", help="session config (key = value lines)")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration-s", type=float)
    p.add_argument("--out", required=True)

    p = add("decode", cmd_decode, "decode a session directory and report diagnostics")
    p.add_argument("--in", dest="input", required=True)

    p = add("sync", cmd_sync, "recover clocks, align streams, write an episode")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tolerance-us", type=float, default=DEFAULT_TOLERANCE_US)
    p.add_argument("--no-refine", action="store_true", help="skip interval refinement of the video clock")
    p.add_argument("--restamp", action="store_true", help="restamp tactile frames from a device-clock fit")

    p = add("pack", cmd_pack, "attach stacked tactile images to every pair")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = add("mask", cmd_mask, "draw a seeded patch mask for every pair")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    mask_flags(p)

    p = add("fuse-eval", cmd_fuse_eval, "masked reconstruction loss over an episode")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--checkpoint", help="VTWT weights; seeded init when omitted")
    p.add_argument("--save-checkpoint", help="write the weights used to this path")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--limit", type=int)
    mask_flags(p)

    p = add("inspect", cmd_inspect, "dataset statistics over episode files")
    p.add_argument("paths", nargs="+")

    p = add("bench", cmd_bench, "decode + align throughput")
    p.add_argument("target", choices=["decode"])
    p.add_argument("--frames", type=int, default=100_000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance-us", type=float, default=DEFAULT_TOLERANCE_US)
    p.add_argument("--json", help="also write the report as JSON")
    return ap


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except OPERATIONAL_ERRORS + (ValueError,) as exc:
        sys.stderr.write(f"vtcap {args.command}: {type(exc).__name__}: {exc}\n")
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
