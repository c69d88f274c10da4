"""Ground-truth simulator of a capture session.

Two tactile pads emit wire frames at ``tactile_rate_hz`` on the host
timeline, stamped by a drifting device clock. A camera films at
``video_rate_hz`` on its own drifting clock while a host-time fiducial is
refreshed at ``fiducial_rate_hz``. Every stream starts exactly at session
time 0, so counts are exact: ``ceil(duration * rate)`` events per stream.

Clock conventions (``t`` is elapsed session time in seconds, ``E`` the host
epoch in microseconds):

* device timestamp = ``E + t*1e6*(1 + drift_ppm*1e-6) + offset_us + jitter``
* camera frame ``i`` is captured at host time ``E + 1e6*i/(rate*(1 + drift_ppm*1e-6)) + jitter``;
  the camera clock offset is unobservable because frames only carry an index
* fiducial ``j`` is displayed from ``E + round(1e6*j/fiducial_rate)`` until the
  next refresh and shows that refresh time

Jitter is Gaussian and clipped at +/-4 sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fiducial import FiducialCode, VideoFrameRecord, encode_fiducial
from .wire import COLS, FRAME_SIZE, ROWS, TAXEL_MAX, Pad, TaxelFrame, encode_frame

DEFAULT_EPOCH_US = 1_700_000_000_000_000


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class ClockSpec:
    offset_us: int = 0
    drift_ppm: float = 0.0
    jitter_std_us: float = 0.0

    def validate(self, name="clock"):
        if self.jitter_std_us < 0:
            raise InvalidSpec(f"{name}: jitter_std_us must be >= 0")
        if not abs(self.drift_ppm) < 10_000:
            raise InvalidSpec(f"{name}: |drift_ppm| must be < 10000")

    @property
    def rate(self):
        return 1.0 + self.drift_ppm * 1e-6


@dataclass(frozen=True)
class ContactEvent:
    t_start_s: float
    t_end_s: float
    pad_id: Pad
    center: tuple
    radius_taxels: float
    peak_value: int
    profile: str = "gaussian"

    def validate(self):
        if not self.t_start_s < self.t_end_s:
            raise InvalidSpec("contact: t_start_s must be < t_end_s")
        r, c = self.center
        if not (0 <= r < ROWS and 0 <= c < COLS):
            raise InvalidSpec(f"contact: center {self.center} outside the {ROWS}x{COLS} grid")
        if not 0 <= self.peak_value <= TAXEL_MAX:
            raise InvalidSpec(f"contact: peak_value must be in [0, {TAXEL_MAX}]")
        if self.radius_taxels <= 0:
            raise InvalidSpec("contact: radius_taxels must be > 0")
        if self.profile not in ("gaussian", "plateau"):
            raise InvalidSpec(f"contact: unknown profile {self.profile!r}")


@dataclass(frozen=True)
class SessionSpec:
    duration_s: float = 10.0
    tactile_rate_hz: float = 23.0
    video_rate_hz: float = 60.0
    fiducial_rate_hz: float = 30.0
    device_clock: ClockSpec = ClockSpec()
    video_clock: ClockSpec = ClockSpec()
    contact_script: tuple = ()
    rng_seed: int = 0
    host_epoch_us: int = DEFAULT_EPOCH_US
    # fraction of fiducial refreshes showing a garbled / stale time
    fiducial_outlier_fraction: float = 0.0
    fiducial_outlier_offset_us: int = 5_000_000
    # fiducial shown only during the first N seconds; None = whole session
    fiducial_window_s: float | None = None
    # host stamping at USB receipt
    receipt_latency_us: float = 0.0
    receipt_jitter_std_us: float = 0.0
    image_payload_bytes: int = 64

    def validate(self):
        if self.duration_s <= 0:
            raise InvalidSpec("duration_s must be > 0")
        for name in ("tactile_rate_hz", "video_rate_hz", "fiducial_rate_hz"):
            if getattr(self, name) <= 0:
                raise InvalidSpec(f"{name} must be > 0")
        if self.fiducial_rate_hz > self.video_rate_hz:
            raise InvalidSpec("fiducial_rate_hz must not exceed video_rate_hz")
        self.device_clock.validate("device_clock")
        self.video_clock.validate("video_clock")
        if not 0 <= self.fiducial_outlier_fraction <= 1:
            raise InvalidSpec("fiducial_outlier_fraction must be in [0, 1]")
        if self.receipt_latency_us < 0 or self.receipt_jitter_std_us < 0:
            raise InvalidSpec("receipt latency and jitter must be >= 0")
        if self.image_payload_bytes < 0:
            raise InvalidSpec("image_payload_bytes must be >= 0")
        if self.host_epoch_us < 0:
            raise InvalidSpec("host_epoch_us must be >= 0")
        for ev in self.contact_script:
            ev.validate()
            if ev.t_start_s >= self.duration_s:
                raise InvalidSpec("contact starts after the session ends")


@dataclass
class GroundTruth:
    """Hidden truth; only oracles and acceptance checks may look at it."""

    tactile_emit_us: dict  # pad -> float64 array, absolute host us
    video_capture_us: np.ndarray
    code_refresh_us: np.ndarray  # true refresh instants, absolute host us
    outlier_codes: np.ndarray  # code indices showing a garbled time
    codes_displayed: np.ndarray  # distinct code indices that some video frame shows
    device_clock: ClockSpec
    video_clock: ClockSpec
    host_epoch_us: int

    @property
    def n_codes(self):
        return len(self.code_refresh_us)


@dataclass
class SimulatedSession:
    streams: dict  # pad -> raw wire bytes
    receipts: dict  # pad -> int64 array (n, 2): stream end offset, host receipt us
    video: list
    truth: GroundTruth
    spec: SessionSpec = field(repr=False, default=None)

    def __iter__(self):
        # (byte streams, video records, ground truth)
        return iter((self.streams, self.video, self.truth))


def event_count(duration_s, rate_hz):
    """Events at k/rate for k >= 0 strictly before ``duration_s``."""
    return max(1, math.ceil(duration_s * rate_hz - 1e-9))


def _clipped_normal(rng, std, size):
    if std == 0:
        return np.zeros(size)
    return np.clip(rng.normal(0.0, std, size), -4 * std, 4 * std)


_rows, _cols = np.mgrid[0:ROWS, 0:COLS]


def _event_field(event):
    d2 = (_rows - event.center[0]) ** 2 + (_cols - event.center[1]) ** 2
    r = event.radius_taxels
    if event.profile == "gaussian":
        vals = np.rint(event.peak_value * np.exp(-d2 / (2 * r * r)))
        vals[d2 > (3 * r) ** 2] = 0
    else:
        vals = np.where(d2 <= r * r, float(event.peak_value), 0.0)
    return vals.astype(np.int64)


def render_contact(event, t):
    """Taxel grid of one event at session time ``t`` (zeros when inactive)."""
    if not event.t_start_s <= t < event.t_end_s:
        return np.zeros((ROWS, COLS), dtype=np.uint16)
    return _event_field(event).astype(np.uint16)


def render_pad(events, pad_id, t):
    """Sum of the pad's active events, saturating at 4095."""
    acc = np.zeros((ROWS, COLS), dtype=np.int64)
    for ev in events:
        if ev.pad_id == pad_id and ev.t_start_s <= t < ev.t_end_s:
            acc += _event_field(ev)
    return np.minimum(acc, TAXEL_MAX).astype(np.uint16)


def simulate_session(spec: SessionSpec) -> SimulatedSession:
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    epoch = spec.host_epoch_us

    # tactile
    n_tac = event_count(spec.duration_s, spec.tactile_rate_hz)
    t_tac = np.arange(n_tac) / spec.tactile_rate_hz
    streams, receipts, emit = {}, {}, {}
    dev = spec.device_clock
    for pad in (Pad.LEFT, Pad.RIGHT):
        dev_jit = _clipped_normal(rng, dev.jitter_std_us, n_tac)
        rx_jit = np.abs(_clipped_normal(rng, spec.receipt_jitter_std_us, n_tac))
        dev_ts = np.rint(epoch + t_tac * 1e6 * dev.rate + dev.offset_us + dev_jit).astype(np.int64)
        if dev_ts.min(initial=0) < 0:
            raise InvalidSpec("device clock offset makes device timestamps negative")
        rx_us = np.rint(epoch + t_tac * 1e6 + spec.receipt_latency_us + rx_jit).astype(np.int64)
        chunks = []
        for k in range(n_tac):
            taxels = render_pad(spec.contact_script, pad, t_tac[k])
            chunks.append(encode_frame(TaxelFrame(pad, k & 0xFFFF, int(dev_ts[k]), taxels)))
        streams[pad] = b"".join(chunks)
        ends = (np.arange(n_tac, dtype=np.int64) + 1) * FRAME_SIZE
        receipts[pad] = np.column_stack([ends, rx_us])
        emit[pad] = epoch + t_tac * 1e6

    # video capture instants
    vc = spec.video_clock
    n_vid = event_count(spec.duration_s, spec.video_rate_hz)
    cap_rel = np.arange(n_vid) * 1e6 / (spec.video_rate_hz * vc.rate)
    cap_rel = cap_rel + _clipped_normal(rng, vc.jitter_std_us, n_vid)

    # fiducial refresh grid, long enough that no frame sees a stale last code
    n_codes = max(event_count(spec.duration_s, spec.fiducial_rate_hz),
                  int(np.floor(cap_rel.max() * spec.fiducial_rate_hz / 1e6)) + 1)
    refresh_rel = np.rint(np.arange(n_codes) * 1e6 / spec.fiducial_rate_hz).astype(np.int64)
    outlier = rng.random(n_codes) < spec.fiducial_outlier_fraction
    shown_ts = epoch + refresh_rel + np.where(outlier, spec.fiducial_outlier_offset_us, 0)

    code_idx = np.clip(np.searchsorted(refresh_rel, cap_rel, side="right") - 1, 0, n_codes - 1)
    window_us = math.inf if spec.fiducial_window_s is None else spec.fiducial_window_s * 1e6
    matrices = {}
    video = []
    for i in range(n_vid):
        payload = rng.integers(0, 256, spec.image_payload_bytes, dtype=np.uint8).tobytes()
        fid = None
        if cap_rel[i] < window_us:
            j = int(code_idx[i])
            if j not in matrices:
                matrices[j] = encode_fiducial(FiducialCode(int(shown_ts[j]), j & 0xFFFF))
            fid = matrices[j]
        video.append(VideoFrameRecord(i, fid, payload))

    truth = GroundTruth(
        tactile_emit_us=emit,
        video_capture_us=epoch + cap_rel,
        code_refresh_us=epoch + refresh_rel,
        outlier_codes=np.flatnonzero(outlier),
        codes_displayed=np.array(sorted(matrices), dtype=np.int64),
        device_clock=dev,
        video_clock=vc,
        host_epoch_us=epoch,
    )
    return SimulatedSession(streams, receipts, video, truth, spec)


def stamp_from_receipts(frames, frame_offsets, receipts):
    """Attach host receipt times to decoded frames.

    ``receipts`` rows are (stream end offset, host time): by that host time
    the reader had received that many bytes. A frame gets the first receipt
    whose offset covers the frame's last byte.
    """
    receipts = np.asarray(receipts, dtype=np.int64).reshape(-1, 2)
    if not frames:
        return []
    ends = np.asarray(frame_offsets, dtype=np.int64) + FRAME_SIZE
    idx = np.searchsorted(receipts[:, 0], ends, side="left")
    if np.any(idx >= len(receipts)):
        raise ValueError("receipt log does not cover every decoded frame")
    stamps = receipts[idx, 1]
    return [f.with_host_ts(int(s)) for f, s in zip(frames, stamps)]
