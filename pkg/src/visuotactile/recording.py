"""On-disk layout of a raw capture session directory.

::

    session.cfg          config echo (see visuotactile.config)
    left.bin, right.bin  raw wire byte streams
    left.rx, right.rx    receipt log: rows of (i64 stream end offset, i64 host us)
    video.vtv            video records
    truth.npz            simulator ground truth (absent for real captures)

``video.vtv``: magic b"VTVF", u16 version, u64 count, then per record
u64 frame index, u8 has_fiducial [32 B], u8 has_decoded [f64],
u32 payload length, payload.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .config import format_config
from .fiducial import FiducialMatrix, VideoFrameRecord
from .wire import Pad

VIDEO_MAGIC = b"VTVF"
VIDEO_VERSION = 1
_PAD_NAMES = {Pad.LEFT: "left", Pad.RIGHT: "right"}


class RecordingError(Exception):
    pass


def encode_video(frames) -> bytes:
    out = [VIDEO_MAGIC, struct.pack("<HQ", VIDEO_VERSION, len(frames))]
    for f in frames:
        out.append(struct.pack("<Q", f.frame_index))
        out.append(b"\x00" if f.fiducial is None else b"\x01" + f.fiducial.to_bytes())
        if f.decoded_host_ts_us is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01" + struct.pack("<d", f.decoded_host_ts_us))
        out.append(struct.pack("<I", len(f.image_payload)) + bytes(f.image_payload))
    return b"".join(out)


def decode_video(data: bytes):
    mv = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(mv):
            raise RecordingError(f"video file truncated at byte {pos}")
        pos += n
        return mv[pos - n:pos]

    if bytes(take(4)) != VIDEO_MAGIC:
        raise RecordingError("not a VTVF video file")
    version, count = struct.unpack("<HQ", take(10))
    if version != VIDEO_VERSION:
        raise RecordingError(f"unsupported video file version {version}")
    frames = []
    for _ in range(count):
        (idx,) = struct.unpack("<Q", take(8))
        fid = FiducialMatrix.from_bytes(bytes(take(32))) if take(1)[0] else None
        dec = struct.unpack("<d", take(8))[0] if take(1)[0] else None
        (n,) = struct.unpack("<I", take(4))
        frames.append(VideoFrameRecord(int(idx), fid, bytes(take(n)), dec))
    if pos != len(mv):
        raise RecordingError(f"{len(mv) - pos} trailing bytes in video file")
    return frames


def save_session(directory, session):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if session.spec is not None:
        (d / "session.cfg").write_text(format_config(session.spec), encoding="utf-8")
    for pad, name in _PAD_NAMES.items():
        (d / f"{name}.bin").write_bytes(session.streams[pad])
        (d / f"{name}.rx").write_bytes(np.asarray(session.receipts[pad], dtype="<i8").tobytes())
    (d / "video.vtv").write_bytes(encode_video(session.video))
    t = session.truth
    np.savez(
        d / "truth.npz",
        tactile_left=t.tactile_emit_us[Pad.LEFT],
        tactile_right=t.tactile_emit_us[Pad.RIGHT],
        video_capture_us=t.video_capture_us,
        code_refresh_us=t.code_refresh_us,
        outlier_codes=t.outlier_codes,
        codes_displayed=t.codes_displayed,
    )


def load_session(directory):
    """``(streams, receipts, video)`` from a session directory."""
    d = Path(directory)
    if not d.is_dir():
        raise RecordingError(f"{os.fspath(d)} is not a directory")
    streams, receipts = {}, {}
    try:
        for pad, name in _PAD_NAMES.items():
            streams[pad] = (d / f"{name}.bin").read_bytes()
            rx = np.frombuffer((d / f"{name}.rx").read_bytes(), dtype="<i8")
            receipts[pad] = rx.reshape(-1, 2).astype(np.int64)
        video = decode_video((d / "video.vtv").read_bytes())
    except OSError as exc:
        raise RecordingError(str(exc)) from exc
    return streams, receipts, video


def load_truth(directory):
    with np.load(Path(directory) / "truth.npz") as z:
        return {k: z[k] for k in z.files}
