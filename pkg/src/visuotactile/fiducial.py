"""Host-time fiducial rendered into video frames.

A 16x16 binary matrix (256 bits, row-major, MSB-first within each byte, so
it packs into 32 bytes)::

    bits [0, 16)     sync pattern 0xA5C3
    bits [16, 80)    host_ts_us, u64 little-endian
    bits [80, 96)    code_seq, u16 little-endian
    bits [96, 112)   CRC-16/CCITT-FALSE of the 10 payload bytes, big-endian
    bits [112, 176)  redundant copy of host_ts_us
    bits [176, 256)  zero padding (ignored by the decoder)

Decoding accepts a matrix whose sync pattern matches when one of these holds,
tried in order:

1. the CRC verifies over (primary timestamp, code_seq);
2. the CRC verifies over (redundant timestamp, code_seq);
3. both timestamp copies agree bit-for-bit and the stored CRC is within one
   bit of the recomputed CRC, i.e. only the CRC field itself was damaged.

Anything else is :class:`Unrecoverable`. Rule 3 is narrower than plain
copy agreement so that a corrupted ``code_seq`` is never accepted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .crc import crc16_ccitt

SIZE = 16
N_BITS = SIZE * SIZE
SYNC_PATTERN = 0xA5C3
_SYNC_BYTES = SYNC_PATTERN.to_bytes(2, "big")
_PAYLOAD = struct.Struct("<QH")

# byte spans inside the 32-byte packed form
TS_SPAN = (2, 10)
SEQ_SPAN = (10, 12)
CRC_SPAN = (12, 14)
COPY_SPAN = (14, 22)


class FiducialError(ValueError):
    pass


class BadSyncPattern(FiducialError):
    pass


class Unrecoverable(FiducialError):
    pass


@dataclass(frozen=True)
class FiducialCode:
    host_ts_us: int
    code_seq: int


@dataclass(frozen=True, eq=False)
class FiducialMatrix:
    """Read-only (16, 16) uint8 array of 0/1 values."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8).reshape(SIZE, SIZE)
        if bits.max(initial=0) > 1:
            raise ValueError("fiducial bits must be 0 or 1")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __eq__(self, other):
        if not isinstance(other, FiducialMatrix):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None

    def to_bytes(self):
        return np.packbits(self.bits.ravel()).tobytes()

    @classmethod
    def from_bytes(cls, data):
        if len(data) != N_BITS // 8:
            raise ValueError(f"fiducial matrix packs into 32 bytes, got {len(data)}")
        return cls(np.unpackbits(np.frombuffer(data, dtype=np.uint8)))

    def flipped(self, *positions):
        bits = self.bits.ravel().copy()
        for p in positions:
            bits[p] ^= 1
        return FiducialMatrix(bits)


def _payload(host_ts_us, code_seq):
    return _PAYLOAD.pack(host_ts_us, code_seq)


def encode_fiducial(code: FiducialCode) -> FiducialMatrix:
    payload = _payload(code.host_ts_us, code.code_seq & 0xFFFF)
    crc = crc16_ccitt(payload).to_bytes(2, "big")
    packed = _SYNC_BYTES + payload + crc + payload[:8] + bytes(10)
    return FiducialMatrix.from_bytes(packed)


def decode_fiducial(m: FiducialMatrix) -> FiducialCode:
    raw = m.to_bytes()
    if raw[:2] != _SYNC_BYTES:
        raise BadSyncPattern(f"sync pattern {raw[:2].hex()} != {SYNC_PATTERN:04x}")
    ts = raw[TS_SPAN[0] : TS_SPAN[1]]
    seq = raw[SEQ_SPAN[0] : SEQ_SPAN[1]]
    copy = raw[COPY_SPAN[0] : COPY_SPAN[1]]
    stored = int.from_bytes(raw[CRC_SPAN[0] : CRC_SPAN[1]], "big")
    code_seq = int.from_bytes(seq, "little")

    crc_primary = crc16_ccitt(ts + seq)
    if crc_primary == stored:
        return FiducialCode(int.from_bytes(ts, "little"), code_seq)
    if crc16_ccitt(copy + seq) == stored:
        return FiducialCode(int.from_bytes(copy, "little"), code_seq)
    if ts == copy and bin(crc_primary ^ stored).count("1") == 1:
        return FiducialCode(int.from_bytes(ts, "little"), code_seq)
    raise Unrecoverable("crc fails and the timestamp copies cannot disambiguate")


@dataclass
class VideoFrameRecord:
    frame_index: int
    fiducial: FiducialMatrix | None = None
    image_payload: bytes = b""
    decoded_host_ts_us: float | None = None

    def __eq__(self, other):
        if not isinstance(other, VideoFrameRecord):
            return NotImplemented
        return (
            self.frame_index == other.frame_index
            and self.fiducial == other.fiducial
            and self.image_payload == other.image_payload
            and self.decoded_host_ts_us == other.decoded_host_ts_us
        )


@dataclass
class SampleTally:
    frames_seen: int = 0
    no_fiducial: int = 0
    bad_sync: int = 0
    unrecoverable: int = 0
    repeats: int = 0
    samples: int = 0
    # per accepted frame: (frame_index, code); used by clock refinement
    observations: list = field(default_factory=list, repr=False)


def extract_code_samples(frames):
    """One ``(frame_index, code)`` sample per distinct code, at first appearance.

    A 30 Hz code filmed at 60 Hz shows up in about two consecutive frames;
    the first one is the least stale. Frames without a fiducial or with an
    undecodable one are skipped and counted. Returns ``(samples, tally)``.
    """
    samples = []
    tally = SampleTally()
    last_index = None
    last_seq = None
    for fr in frames:
        if last_index is not None and fr.frame_index <= last_index:
            raise ValueError(
                f"frame indices must strictly increase ({fr.frame_index} after {last_index})"
            )
        last_index = fr.frame_index
        tally.frames_seen += 1
        if fr.fiducial is None:
            tally.no_fiducial += 1
            continue
        try:
            code = decode_fiducial(fr.fiducial)
        except BadSyncPattern:
            tally.bad_sync += 1
            continue
        except Unrecoverable:
            tally.unrecoverable += 1
            continue
        tally.observations.append((fr.frame_index, code))
        if code.code_seq == last_seq:
            tally.repeats += 1
            continue
        last_seq = code.code_seq
        samples.append((fr.frame_index, code))
    tally.samples = len(samples)
    return samples, tally
