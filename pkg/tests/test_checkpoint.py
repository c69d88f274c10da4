import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from visuotactile.checkpoint import (
    BadMagic,
    BadVersion,
    CheckpointError,
    TruncatedCheckpoint,
    as_float32,
    dumps,
    load_checkpoint,
    loads,
    save_checkpoint,
)
from visuotactile.fusion import init_params

names = st.text(st.characters(codec="utf-8", exclude_categories=("Cs",)), min_size=1, max_size=12)
f32 = arrays(np.float32, array_shapes(min_dims=0, max_dims=3, max_side=4),
             elements=st.floats(width=32, allow_nan=False))


@given(st.dictionaries(names, f32, max_size=5))
def test_round_trip(params):
    back = loads(dumps(params))
    assert back.keys() == params.keys()
    for k, v in params.items():
        assert back[k].dtype == np.float64 and back[k].shape == v.shape
        assert np.array_equal(back[k], v.astype(np.float64))


def test_byte_layout():
    blob = dumps({"b": np.array([1.0]), "a": np.zeros((2, 1))})
    assert blob[:4] == b"VTWT"
    assert struct.unpack_from("<HI", blob, 4) == (1, 2)
    # sorted order: "a" first
    assert struct.unpack_from("<H", blob, 10) == (1,) and blob[12:13] == b"a"
    assert struct.unpack_from("<III", blob, 13) == (2, 2, 1)
    assert blob[-4:] == struct.pack("<f", 1.0)


def test_insertion_order_irrelevant():
    a = {"x": np.ones(2), "y": np.zeros(3)}
    b = {"y": np.zeros(3), "x": np.ones(2)}
    assert dumps(a) == dumps(b)


def test_model_file(tmp_path):
    p = init_params(42, d=16, num_heads=4, hidden=8)
    path = tmp_path / "w.vtwt"
    save_checkpoint(path, p)
    back = load_checkpoint(path)
    q = as_float32(p)
    assert all(np.array_equal(back[k], q[k]) for k in p)


def test_bad_magic():
    with pytest.raises(BadMagic):
        loads(b"XXXX" + dumps({})[4:])


def test_bad_version():
    blob = bytearray(dumps({}))
    blob[4] = 2
    with pytest.raises(BadVersion):
        loads(bytes(blob))


def test_every_truncation_detected():
    blob = dumps({"w": np.arange(6.0).reshape(2, 3), "b": np.ones(2)})
    for cut in range(len(blob)):
        with pytest.raises(CheckpointError) as ei:
            loads(blob[:cut])
        if isinstance(ei.value, TruncatedCheckpoint):
            assert 0 <= ei.value.offset <= cut


def test_trailing_bytes():
    with pytest.raises(CheckpointError):
        loads(dumps({"w": np.ones(1)}) + b"\0")
