"""Weight container ("VTWT").

Layout, little-endian throughout::

    magic   4 bytes  b"VTWT"
    version u16      1
    count   u32
    count x entry:
        name_len u16, name (UTF-8)
        ndim u32, ndim x u32 dims
        prod(dims) x f32 values, C order

Entries are written in sorted name order so the same parameters always
give the same bytes.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"VTWT"
VERSION = 1


class CheckpointError(ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class BadVersion(CheckpointError):
    pass


class TruncatedCheckpoint(CheckpointError):
    def __init__(self, offset, what):
        super().__init__(f"checkpoint truncated at byte {offset} while reading {what}")
        self.offset = offset


def dumps(params) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(params))]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f4", order="C")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(data: bytes) -> dict:
    """Parse a container; values come back as float64 arrays."""
    mv = memoryview(data)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(mv):
            raise TruncatedCheckpoint(pos, what)
        chunk = mv[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise BadMagic("not a VTWT checkpoint")
    version, count = struct.unpack("<HI", take(6, "header"))
    if version != VERSION:
        raise BadVersion(f"unsupported checkpoint version {version}")
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = bytes(take(nlen, "name")).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4, f"{name} rank"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"{name} shape"))
        n = int(np.prod(shape, dtype=np.int64))
        vals = np.frombuffer(take(4 * n, f"{name} data"), dtype="<f4")
        params[name] = vals.astype(np.float64).reshape(shape)
    if pos != len(mv):
        raise CheckpointError(f"{len(mv) - pos} trailing bytes after {count} entries")
    return params


def save_checkpoint(path, params):
    with open(path, "wb") as fh:
        fh.write(dumps(params))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def as_float32(params):
    """Round every value through f32, i.e. what a save/load cycle yields."""
    return {k: np.asarray(v, dtype=np.float32).astype(np.float64) for k, v in params.items()}
