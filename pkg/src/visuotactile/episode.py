"""Episode container ("VTWD") and dataset statistics.

File layout, little-endian throughout::

    magic        4 bytes  b"VTWD"
    version      u16      1
    header_len   u32, then header_len bytes of UTF-8 ``key = value`` lines
    record_count u64
    records      each: u32 body length, then the body

Record body::

    f64   pair host time (the video frame's recovered host time)
    784B  left wire frame, u8 has_host, i64 left host stamp
    784B  right wire frame, u8 has_host, i64 right host stamp
    u64   video frame index
    u8    has_fiducial, [32B packed fiducial]
    u8    has_decoded_ts, [f64 decoded host time]
    u32   payload length, payload bytes
    f64   skew left, f64 skew right
    u8    has_proprio, [u32 n, n x f32]
    u8    has_image, [768 x f32, 24x32 row-major]
    u8    has_mask, [6B packed 6x8 visibility bits, u8 has_ratio, [f64 ratio]]

The count is written as a placeholder and patched on close, so records
stream to disk without buffering the whole episode.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .align import SyncedPair
from .fiducial import FiducialMatrix, VideoFrameRecord
from .preprocess import GRID_H, GRID_W, IMG_H, IMG_W, PatchMask
from .wire import FRAME_SIZE, WireError, decode_frame, encode_frame

MAGIC = b"VTWD"
VERSION = 1

SKEW_BIN_US = 1000
SKEW_BINS = 23  # |skew| in [0, 23 ms) by 1 ms, plus one overflow bucket
RATIO_EDGES = np.round(np.arange(0.60, 0.8001, 0.02), 2)


class EpisodeError(Exception):
    pass


class IoFailure(EpisodeError):
    pass


class BadMagic(EpisodeError):
    pass


class BadVersion(EpisodeError):
    pass


class TruncatedFile(EpisodeError):
    def __init__(self, offset, what):
        super().__init__(f"file truncated at byte {offset} while reading {what}")
        self.offset = offset


class CountMismatch(EpisodeError):
    def __init__(self, declared, found):
        super().__init__(f"header declares {declared} records, file holds {found}")
        self.declared = declared
        self.found = found


class CorruptRecord(EpisodeError):
    def __init__(self, offset, why):
        super().__init__(f"record at byte {offset} is corrupt: {why}")
        self.offset = offset


@dataclass
class Episode:
    meta: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)

    def __len__(self):
        return len(self.pairs)


# header text

def format_header(meta):
    lines = []
    for k in sorted(meta):
        v = str(meta[k])
        if "\n" in v or "=" in k or "\n" in k:
            raise ValueError(f"header entry {k!r} cannot contain newlines or '=' in the key")
        lines.append(f"{k} = {v}")
    return "\n".join(lines).encode("utf-8")


def parse_header(raw):
    meta = {}
    for line in raw.decode("utf-8").splitlines():
        if not line.strip():
            continue
        k, _, v = line.partition("=")
        meta[k.strip()] = v.strip()
    return meta


# record codec

def _opt_i64(v):
    return struct.pack("<Bq", 0, 0) if v is None else struct.pack("<Bq", 1, int(v))


def encode_record(pair: SyncedPair) -> bytes:
    out = io.BytesIO()
    w = out.write
    w(struct.pack("<d", pair.host_ts_us))
    for fr in (pair.left, pair.right):
        w(encode_frame(fr))
        w(_opt_i64(fr.host_ts_us))
    v = pair.video
    w(struct.pack("<Q", v.frame_index))
    if v.fiducial is None:
        w(b"\x00")
    else:
        w(b"\x01" + v.fiducial.to_bytes())
    if v.decoded_host_ts_us is None:
        w(b"\x00")
    else:
        w(b"\x01" + struct.pack("<d", v.decoded_host_ts_us))
    w(struct.pack("<I", len(v.image_payload)) + bytes(v.image_payload))
    w(struct.pack("<dd", pair.skew_left_us, pair.skew_right_us))
    if pair.proprio is None:
        w(b"\x00")
    else:
        p = np.asarray(pair.proprio, dtype="<f4").ravel()
        w(b"\x01" + struct.pack("<I", p.size) + p.tobytes())
    if pair.image is None:
        w(b"\x00")
    else:
        img = np.asarray(pair.image, dtype="<f4")
        if img.size != IMG_H * IMG_W:
            raise ValueError(f"stored tactile image must have {IMG_H * IMG_W} values")
        w(b"\x01" + img.tobytes())
    m = pair.mask
    if m is None:
        w(b"\x00")
    else:
        w(b"\x01" + np.packbits(np.asarray(m.bits, dtype=np.uint8).ravel()).tobytes())
        w(b"\x00" if m.ratio is None else b"\x01" + struct.pack("<d", m.ratio))
    return out.getvalue()


class _Reader:
    def __init__(self, buf, base):
        self.buf = buf
        self.pos = 0
        self.base = base

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedFile(self.base + self.pos, what)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    def flag(self, what):
        (f,) = self.unpack("<B", what)
        return f


def decode_record(body: bytes, base_offset=0) -> SyncedPair:
    r = _Reader(body, base_offset)
    (host,) = r.unpack("<d", "pair host time")
    pads = []
    for side in ("left", "right"):
        wire = r.take(FRAME_SIZE, f"{side} frame")
        try:
            fr = decode_frame(wire)
        except WireError as exc:
            raise CorruptRecord(base_offset, f"{side} frame: {exc}") from exc
        has, ts = r.unpack("<Bq", f"{side} host stamp")
        pads.append(fr.with_host_ts(ts if has else None))
    (idx,) = r.unpack("<Q", "video index")
    fid = FiducialMatrix.from_bytes(r.take(32, "fiducial")) if r.flag("fiducial flag") else None
    dec = r.unpack("<d", "decoded host time")[0] if r.flag("decoded flag") else None
    (plen,) = r.unpack("<I", "payload length")
    payload = bytes(r.take(plen, "payload"))
    skew_l, skew_r = r.unpack("<dd", "skews")
    proprio = None
    if r.flag("proprio flag"):
        (n,) = r.unpack("<I", "proprio length")
        proprio = np.frombuffer(r.take(4 * n, "proprio"), dtype="<f4").astype(np.float32)
    image = None
    if r.flag("image flag"):
        raw = r.take(4 * IMG_H * IMG_W, "tactile image")
        image = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(IMG_H, IMG_W)
    mask = None
    if r.flag("mask flag"):
        bits = np.unpackbits(np.frombuffer(r.take(6, "mask bits"), dtype=np.uint8))
        ratio = r.unpack("<d", "mask ratio")[0] if r.flag("ratio flag") else None
        mask = PatchMask(bits.reshape(GRID_H, GRID_W), ratio)
    if r.pos != len(body):
        raise CorruptRecord(base_offset, f"{len(body) - r.pos} unexpected trailing bytes")
    video = VideoFrameRecord(int(idx), fid, payload, dec)
    return SyncedPair(host, pads[0], pads[1], video, skew_l, skew_r, proprio, image, mask)


# files

class EpisodeWriter:
    """Append records to a new episode file; the count is patched on close."""

    def __init__(self, path, meta=None):
        self.path = os.fspath(path)
        try:
            self._fh = open(self.path, "wb")
        except OSError as exc:
            raise IoFailure(f"cannot open {self.path} for writing: {exc}") from exc
        header = format_header(meta or {})
        self._fh.write(MAGIC + struct.pack("<HI", VERSION, len(header)) + header)
        self._count_at = self._fh.tell()
        self._fh.write(struct.pack("<Q", 0))
        self.count = 0
        self._last_ts = None

    def append(self, pair: SyncedPair):
        if self._last_ts is not None and not pair.host_ts_us > self._last_ts:
            raise ValueError("pair host timestamps must strictly increase")
        body = encode_record(pair)
        try:
            self._fh.write(struct.pack("<I", len(body)) + body)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self._last_ts = pair.host_ts_us
        self.count += 1

    def close(self):
        if self._fh.closed:
            return
        try:
            self._fh.seek(self._count_at)
            self._fh.write(struct.pack("<Q", self.count))
        finally:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_episode(path, episode: Episode):
    with EpisodeWriter(path, episode.meta) as w:
        for p in episode.pairs:
            w.append(p)


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def read_header(data):
    """``(meta, declared_count, offset of first record)``."""
    r = _Reader(data, 0)
    if bytes(r.take(4, "magic")) != MAGIC:
        raise BadMagic("not a VTWD episode file")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise BadVersion(f"unsupported episode version {version}")
    (hlen,) = r.unpack("<I", "header length")
    meta = parse_header(bytes(r.take(hlen, "header")))
    (count,) = r.unpack("<Q", "record count")
    return meta, count, r.pos


def iter_records(data, start, count):
    pos = start
    n = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise TruncatedFile(pos, "record length")
        (blen,) = struct.unpack_from("<I", data, pos)
        if pos + 4 + blen > len(data):
            raise TruncatedFile(pos + 4, f"record {n} body")
        yield decode_record(data[pos + 4:pos + 4 + blen], pos + 4)
        pos += 4 + blen
        n += 1
    if n != count:
        raise CountMismatch(count, n)


def read_episode(path) -> Episode:
    data = memoryview(_read_bytes(path))
    meta, count, start = read_header(data)
    pairs = list(iter_records(data, start, count))
    return Episode(meta, pairs)


# stats

@dataclass
class DatasetStats:
    episodes: int = 0
    pairs: int = 0
    frames_left: int = 0
    frames_right: int = 0
    max_abs_skew_us: float = 0.0
    skew_hist: np.ndarray = field(default_factory=lambda: np.zeros(SKEW_BINS + 1, dtype=np.int64))
    mask_ratio_hist: np.ndarray = field(default_factory=lambda: np.zeros(len(RATIO_EDGES) - 1, dtype=np.int64))
    masks_unmasked: int = 0
    failures: list = field(default_factory=list)  # (path, message)

    def add_episode(self, ep: Episode):
        self.episodes += 1
        self.pairs += len(ep.pairs)
        self.frames_left += len(ep.pairs)
        self.frames_right += len(ep.pairs)
        for p in ep.pairs:
            for s in (p.skew_left_us, p.skew_right_us):
                a = abs(s)
                self.max_abs_skew_us = max(self.max_abs_skew_us, a)
                self.skew_hist[min(int(a // SKEW_BIN_US), SKEW_BINS)] += 1
            if p.mask is not None:
                if p.mask.ratio is None:
                    self.masks_unmasked += 1
                else:
                    b = np.searchsorted(RATIO_EDGES, p.mask.ratio, side="right") - 1
                    self.mask_ratio_hist[min(max(b, 0), len(self.mask_ratio_hist) - 1)] += 1

    def as_dict(self):
        d = {
            "episodes": self.episodes,
            "pairs": self.pairs,
            "frames_left": self.frames_left,
            "frames_right": self.frames_right,
            "max_abs_skew_us": self.max_abs_skew_us,
            "skew_hist_bin_us": SKEW_BIN_US,
            "skew_hist": " ".join(str(int(c)) for c in self.skew_hist),
            "masks_unmasked": self.masks_unmasked,
            "mask_ratio_edges": " ".join(f"{e:.2f}" for e in RATIO_EDGES),
            "mask_ratio_hist": " ".join(str(int(c)) for c in self.mask_ratio_hist),
            "failures": len(self.failures),
        }
        for i, (path, msg) in enumerate(self.failures):
            d[f"failure.{i}"] = f"{path}: {msg}"
        return d


def compute_stats(paths) -> DatasetStats:
    """Aggregate over episode files in the given order; bad files are recorded, not fatal."""
    stats = DatasetStats()
    for path in paths:
        try:
            ep = read_episode(path)
        except EpisodeError as exc:
            stats.failures.append((os.fspath(path), f"{type(exc).__name__}: {exc}"))
            continue
        stats.add_episode(ep)
    return stats
