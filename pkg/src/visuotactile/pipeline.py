"""Decode, timestamp and align one recorded session."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .align import DEFAULT_TOLERANCE_US, align_streams
from .clock import ClockFitError, apply_clock_model, fit_clock_model, refine_clock_model
from .fiducial import extract_code_samples
from .sim import stamp_from_receipts
from .wire import Pad, decode_stream


@dataclass
class SyncResult:
    pairs: list
    report: object  # AlignmentReport
    video_model: object  # ClockModel
    base_model: object  # first-appearance fit before refinement
    tally: object  # SampleTally
    decode: dict = field(default_factory=dict)  # pad -> DecodeDiagnostics
    tactile: dict = field(default_factory=dict)  # pad -> stamped frames
    video: list = field(default_factory=list)  # frames with decoded_host_ts_us


def decode_pads(streams, receipts):
    """``{pad: stamped frames}``, ``{pad: diagnostics}`` from raw pad streams."""
    frames, diags = {}, {}
    for pad in (Pad.LEFT, Pad.RIGHT):
        decoded, diag = decode_stream(streams[pad])
        frames[pad] = stamp_from_receipts(decoded, diag.frame_offsets, receipts[pad])
        diags[pad] = diag
    return frames, diags


def recover_video_clock(video, refine=True):
    """Fit frame index -> host time from the fiducials.

    Returns ``(model, base_model, tally)``. Refinement falls back to the
    first-appearance fit if the interval program cannot be solved.
    """
    samples, tally = extract_code_samples(video)
    base = fit_clock_model([(i, c.host_ts_us) for i, c in samples])
    model = base
    if refine:
        try:
            model = refine_clock_model(base, tally.observations)
        except ClockFitError:
            model = base
    return model, base, tally


def restamp_tactile(frames):
    """Replace receipt stamps by a device-clock fit (smooths USB receipt jitter)."""
    if len(frames) < 2:
        return list(frames)
    order = np.argsort([f.device_ts_us for f in frames], kind="stable")
    samples = [(frames[i].device_ts_us, frames[i].host_ts_us) for i in order]
    model = fit_clock_model(samples)
    ts = model.predict([f.device_ts_us for f in frames])
    return [f.with_host_ts(int(np.rint(t))) for f, t in zip(frames, ts)]


def sync_session(streams, receipts, video, tolerance_us=DEFAULT_TOLERANCE_US,
                 refine=True, restamp=False) -> SyncResult:
    tactile, diags = decode_pads(streams, receipts)
    if restamp:
        tactile = {p: restamp_tactile(f) for p, f in tactile.items()}
    for p in tactile:
        tactile[p] = sorted(tactile[p], key=lambda f: f.host_ts_us)
    model, base, tally = recover_video_clock(video, refine)
    stamped = apply_clock_model(model, video)
    pairs, report = align_streams(stamped, tactile[Pad.LEFT], tactile[Pad.RIGHT], tolerance_us)
    return SyncResult(pairs, report, model, base, tally, diags, tactile, stamped)
