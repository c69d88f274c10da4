"""Binary wire format for one tactile pad reading.

Every frame is exactly 784 bytes, little-endian unless noted::

    [0, 2)     sync word AA 55
    [2, 3)     version (0x01)
    [3, 4)     pad id (0 = left, 1 = right)
    [4, 6)     sequence counter, u16
    [6, 14)    device timestamp in microseconds, u64
    [14, 782)  384 taxels, row-major, u16 each (12 significant bits)
    [782, 784) CRC-16/CCITT-FALSE over [2, 782), big-endian

The host receipt timestamp never travels on the wire; the receiving side
attaches it after decoding.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .crc import crc16_ccitt

ROWS = 12
COLS = 32
N_TAXELS = ROWS * COLS
TAXEL_MAX = 4095

SYNC = b"\xaa\x55"
VERSION = 0x01
FRAME_SIZE = 784
HEADER_SIZE = 14
CRC_OFFSET = 782

_HEADER = struct.Struct("<2sBBHQ")
_CRC = struct.Struct(">H")
_TAXEL_DTYPE = np.dtype("<u2")


class Pad(enum.IntEnum):
    LEFT = 0
    RIGHT = 1


class WireError(ValueError):
    """Base class for frame-level decode/encode failures."""


class TaxelOutOfRange(WireError):
    pass


class BadSync(WireError):
    pass


class BadCrc(WireError):
    pass


class BadVersion(WireError):
    pass


class BadPadId(WireError):
    pass


class BadLength(WireError):
    pass


@dataclass(frozen=True, eq=False)
class TaxelFrame:
    """One pad reading. ``taxels`` is a read-only (12, 32) uint16 array."""

    pad_id: Pad
    seq: int
    device_ts_us: int
    taxels: np.ndarray
    host_ts_us: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.taxels)
        if arr.shape != (ROWS, COLS):
            raise ValueError(f"taxels must have shape {(ROWS, COLS)}, got {arr.shape}")
        if arr.dtype != np.uint16 or arr.flags.writeable:
            arr = np.array(arr, dtype=np.uint16) if arr.dtype != np.uint16 else arr.copy()
            arr.flags.writeable = False
        object.__setattr__(self, "taxels", arr)
        object.__setattr__(self, "pad_id", Pad(self.pad_id))

    def __eq__(self, other):
        if not isinstance(other, TaxelFrame):
            return NotImplemented
        return (
            self.pad_id == other.pad_id
            and self.seq == other.seq
            and self.device_ts_us == other.device_ts_us
            and self.host_ts_us == other.host_ts_us
            and np.array_equal(self.taxels, other.taxels)
        )

    __hash__ = None

    def same_reading(self, other):
        """Field equality ignoring the host receipt stamp."""
        return self.with_host_ts(None) == other.with_host_ts(None)

    def with_host_ts(self, host_ts_us):
        return TaxelFrame._trusted(self.pad_id, self.seq, self.device_ts_us, self.taxels, host_ts_us)

    @classmethod
    def _trusted(cls, pad_id, seq, device_ts_us, taxels, host_ts_us=None):
        # skips validation; taxels must already be a read-only (12, 32) uint16 array
        obj = object.__new__(cls)
        object.__setattr__(obj, "pad_id", pad_id)
        object.__setattr__(obj, "seq", seq)
        object.__setattr__(obj, "device_ts_us", device_ts_us)
        object.__setattr__(obj, "taxels", taxels)
        object.__setattr__(obj, "host_ts_us", host_ts_us)
        return obj


def encode_frame(frame: TaxelFrame) -> bytes:
    taxels = np.asarray(frame.taxels)
    if taxels.max(initial=0) > TAXEL_MAX:
        r, c = np.unravel_index(int(np.argmax(taxels)), taxels.shape)
        raise TaxelOutOfRange(f"taxel ({r}, {c}) = {int(taxels[r, c])} exceeds {TAXEL_MAX}")
    buf = bytearray(FRAME_SIZE)
    _HEADER.pack_into(
        buf, 0, SYNC, VERSION, int(frame.pad_id), frame.seq & 0xFFFF, frame.device_ts_us
    )
    buf[HEADER_SIZE:CRC_OFFSET] = taxels.astype(_TAXEL_DTYPE, copy=False).tobytes()
    _CRC.pack_into(buf, CRC_OFFSET, crc16_ccitt(bytes(buf[2:CRC_OFFSET])))
    return bytes(buf)


def _check_frame(buf, offset=0):
    """Raise the first applicable error for the frame starting at ``offset``."""
    if buf[offset : offset + 2] != SYNC:
        raise BadSync(f"expected sync AA 55, got {bytes(buf[offset:offset + 2]).hex(' ')}")
    body = memoryview(buf)[offset + 2 : offset + CRC_OFFSET]
    (stored,) = _CRC.unpack_from(buf, offset + CRC_OFFSET)
    computed = crc16_ccitt(body)
    if stored != computed:
        raise BadCrc(f"crc mismatch: stored {stored:#06x}, computed {computed:#06x}")
    if buf[offset + 2] != VERSION:
        raise BadVersion(f"unknown version byte {buf[offset + 2]:#04x}")
    if buf[offset + 3] > 1:
        raise BadPadId(f"pad id {buf[offset + 3]} out of range")


_PADS = (Pad.LEFT, Pad.RIGHT)


def _unpack_many(buf, offsets, headers):
    """Frames at the given offsets (already verified), taxels gathered in one pass."""
    if not offsets:
        return []
    raw = b"".join([buf[o + HEADER_SIZE : o + CRC_OFFSET] for o in offsets])
    taxels = (np.frombuffer(raw, dtype=_TAXEL_DTYPE) & 0x0FFF).astype(np.uint16).reshape(-1, ROWS, COLS)
    taxels.flags.writeable = False
    return [
        TaxelFrame._trusted(_PADS[pad], seq, ts, taxels[i])
        for i, (pad, seq, ts) in enumerate(headers)
    ]


def _unpack(buf, offset=0):
    _, _, pad, seq, ts = _HEADER.unpack_from(buf, offset)
    taxels = np.frombuffer(buf, dtype=_TAXEL_DTYPE, count=N_TAXELS, offset=offset + HEADER_SIZE)
    taxels = (taxels & 0x0FFF).astype(np.uint16).reshape(ROWS, COLS)
    taxels.flags.writeable = False
    return TaxelFrame(Pad(pad), seq, ts, taxels)


def decode_frame(buf: bytes) -> TaxelFrame:
    """Decode one 784-byte wire frame; raise BadSync / BadCrc / BadVersion."""
    if len(buf) != FRAME_SIZE:
        raise BadLength(f"wire frame must be {FRAME_SIZE} bytes, got {len(buf)}")
    buf = bytes(buf)
    _check_frame(buf)
    return _unpack(buf)


@dataclass
class DecodeDiagnostics:
    frames_ok: int = 0
    frames_crc_fail: int = 0
    bytes_skipped_resync: int = 0
    trailing_bytes: int = 0
    seq_gaps: list = field(default_factory=list)
    frame_offsets: list = field(default_factory=list)

    def accounted_bytes(self):
        return self.frames_ok * FRAME_SIZE + self.bytes_skipped_resync + self.trailing_bytes


class StreamDecoder:
    """Incremental decoder with byte-granular resynchronization.

    Feed arbitrary chunks; complete frames are returned as soon as their
    last byte arrives. On a bad frame the cursor advances one byte and scans
    for the next sync word, so every input byte ends up counted exactly once
    as part of a frame, as skipped, or (after :meth:`finish`) as trailing.
    """

    def __init__(self):
        self.diagnostics = DecodeDiagnostics()
        self._buf = bytearray()
        self._base = 0  # absolute stream offset of _buf[0]
        self._last_seq = {}

    def feed(self, chunk):
        self._buf += chunk
        buf = bytes(self._buf)
        n = len(buf)
        pos = 0
        offsets, headers = [], []
        diag = self.diagnostics
        while True:
            if buf[pos : pos + 2] != SYNC:
                nxt = buf.find(SYNC, pos + 1)
                if nxt < 0:
                    # keep a lone trailing 0xAA, it may start the next sync word
                    keep = 1 if n > pos and buf[-1] == 0xAA else 0
                    diag.bytes_skipped_resync += n - keep - pos
                    pos = n - keep
                    break
                diag.bytes_skipped_resync += nxt - pos
                pos = nxt
            if n - pos < FRAME_SIZE:
                break
            try:
                _check_frame(buf, pos)
            except (BadCrc, BadVersion, BadPadId):
                diag.frames_crc_fail += 1
                diag.bytes_skipped_resync += 1
                pos += 1
                continue
            _, _, pad, seq, ts = _HEADER.unpack_from(buf, pos)
            last = self._last_seq.get(pad)
            if last is not None and seq != (last + 1) & 0xFFFF:
                diag.seq_gaps.append((_PADS[pad], (last + 1) & 0xFFFF, seq))
            self._last_seq[pad] = seq
            diag.frames_ok += 1
            diag.frame_offsets.append(self._base + pos)
            offsets.append(pos)
            headers.append((pad, seq, ts))
            pos += FRAME_SIZE
        out = _unpack_many(buf, offsets, headers)
        del self._buf[:pos]
        self._base += pos
        return out

    def finish(self):
        """Account for any buffered partial frame and return the diagnostics."""
        self.diagnostics.trailing_bytes = len(self._buf)
        return self.diagnostics


def decode_stream(data: bytes):
    """Decode a whole byte sequence. Never raises on corrupt input.

    Returns ``(frames, diagnostics)``; the identity
    ``frames_ok * 784 + bytes_skipped_resync + trailing_bytes == len(data)``
    always holds.
    """
    dec = StreamDecoder()
    frames = dec.feed(data)
    return frames, dec.finish()


def random_frame(rng, pad_id=None, seq=None, device_ts_us=None):
    """Random valid frame drawn from a numpy Generator (test/bench helper)."""
    return TaxelFrame(
        Pad(int(rng.integers(2))) if pad_id is None else Pad(pad_id),
        int(rng.integers(1 << 16)) if seq is None else seq,
        int(rng.integers(0, 1 << 64, dtype=np.uint64)) if device_ts_us is None else device_ts_us,
        rng.integers(0, TAXEL_MAX + 1, size=(ROWS, COLS), dtype=np.uint16),
    )
