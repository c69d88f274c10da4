import struct

import numpy as np
import pytest

from visuotactile.align import SyncedPair
from visuotactile.episode import (
    RATIO_EDGES,
    BadMagic,
    BadVersion,
    CorruptRecord,
    CountMismatch,
    Episode,
    EpisodeWriter,
    IoFailure,
    TruncatedFile,
    compute_stats,
    decode_record,
    encode_record,
    parse_header,
    format_header,
    read_episode,
    write_episode,
)
from visuotactile.fiducial import FiducialMatrix, VideoFrameRecord
from visuotactile.pipeline import sync_session
from visuotactile.preprocess import PatchMask, draw_mask, stack_pads
from visuotactile.sim import SessionSpec, simulate_session
from visuotactile.wire import Pad, random_frame


def make_pairs(n, seed=0, extras=True):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        l = random_frame(rng, Pad.LEFT).with_host_ts(1000 * i + 3)
        r = random_frame(rng, Pad.RIGHT).with_host_ts(1000 * i - 7)
        fid = FiducialMatrix(rng.integers(0, 2, (16, 16)).astype(np.uint8)) if i % 2 else None
        v = VideoFrameRecord(i, fid, bytes(rng.integers(0, 256, i % 5, dtype=np.uint8)), 1000.0 * i + 0.25)
        p = SyncedPair(1000.0 * i + 0.25, l, r, v, 2.75, -7.25)
        if extras and i % 3 == 0:
            p.proprio = rng.normal(size=7).astype(np.float32)
            p.image = stack_pads(l, r).astype(np.float32)
            p.mask = draw_mask(rng) if i % 2 else PatchMask.all_visible()
        pairs.append(p)
    return pairs


def test_record_round_trip():
    for p in make_pairs(12):
        assert decode_record(encode_record(p)) == p


def test_header_round_trip():
    meta = {"session": "a b", "clock.slope": "16666.7", "n": 3}
    assert parse_header(format_header(meta)) == {k: str(v) for k, v in meta.items()}
    with pytest.raises(ValueError):
        format_header({"x": "two\nlines"})


def test_empty_episode(tmp_path):
    path = tmp_path / "e.vtw"
    write_episode(path, Episode({"k": "v"}, []))
    ep = read_episode(path)
    assert ep.meta == {"k": "v"} and ep.pairs == []
    s = compute_stats([path])
    assert s.pairs == 0 and s.episodes == 1 and s.failures == []


def test_file_round_trip(tmp_path):
    pairs = make_pairs(40, seed=3)
    path = tmp_path / "e.vtw"
    write_episode(path, Episode({"a": "1"}, pairs))
    assert read_episode(path).pairs == pairs


def test_simulated_thousand_pairs(tmp_path):
    s = simulate_session(SessionSpec(duration_s=45, rng_seed=21))
    res = sync_session(s.streams, s.receipts, s.video)
    pairs = res.pairs[:1000]
    assert len(pairs) == 1000
    path = tmp_path / "sim.vtw"
    write_episode(path, Episode({"source": "sim"}, pairs))
    back = read_episode(path)
    assert back.pairs == pairs
    # byte identity of each record payload
    assert [encode_record(p) for p in back.pairs] == [encode_record(p) for p in pairs]


def test_stats_match_alignment_report(tmp_path):
    s = simulate_session(SessionSpec(duration_s=20, rng_seed=4))
    res = sync_session(s.streams, s.receipts, s.video)
    path = tmp_path / "e.vtw"
    write_episode(path, Episode({}, res.pairs))
    st = compute_stats([path])
    assert st.pairs == res.report.pairs_emitted
    assert st.max_abs_skew_us == res.report.max_abs_skew_us
    assert st.skew_hist.sum() == 2 * st.pairs


def test_truncated_mid_payload(tmp_path):
    path = tmp_path / "e.vtw"
    write_episode(path, Episode({}, make_pairs(3, extras=False)))
    data = path.read_bytes()
    path.write_bytes(data[:-100])
    with pytest.raises(TruncatedFile) as ei:
        read_episode(path)
    # the last record body starts after its 4-byte length prefix
    last_len = len(encode_record(make_pairs(3, extras=False)[2]))
    assert ei.value.offset == len(data) - last_len
    assert str(ei.value.offset) in str(ei.value)


def test_every_cut_is_an_error(tmp_path):
    path = tmp_path / "e.vtw"
    write_episode(path, Episode({"x": "y"}, make_pairs(2, extras=True)))
    data = path.read_bytes()
    for cut in range(0, len(data), 37):
        path.write_bytes(data[:cut])
        with pytest.raises((TruncatedFile, CountMismatch, BadMagic)):
            read_episode(path)


def test_count_mismatch(tmp_path):
    path = tmp_path / "e.vtw"
    write_episode(path, Episode({}, make_pairs(4, extras=False)))
    data = bytearray(path.read_bytes())
    hlen = struct.unpack_from("<I", data, 6)[0]
    struct.pack_into("<Q", data, 10 + hlen, 5)
    path.write_bytes(bytes(data))
    with pytest.raises(CountMismatch) as ei:
        read_episode(path)
    assert (ei.value.declared, ei.value.found) == (5, 4)


def test_bad_magic_and_version(tmp_path):
    path = tmp_path / "e.vtw"
    write_episode(path, Episode({}, []))
    data = bytearray(path.read_bytes())
    path.write_bytes(b"NOPE" + bytes(data[4:]))
    with pytest.raises(BadMagic):
        read_episode(path)
    data[4] = 9
    path.write_bytes(bytes(data))
    with pytest.raises(BadVersion):
        read_episode(path)


def test_corrupt_wire_frame(tmp_path):
    body = bytearray(encode_record(make_pairs(1, extras=False)[0]))
    body[8 + 100] ^= 0xFF  # inside the left frame's taxel area
    with pytest.raises(CorruptRecord):
        decode_record(bytes(body))


def test_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        read_episode(tmp_path / "absent.vtw")


def test_writer_enforces_order(tmp_path):
    a, b = make_pairs(2, extras=False)
    with EpisodeWriter(tmp_path / "e.vtw") as w:
        w.append(b)
        with pytest.raises(ValueError):
            w.append(a)
        with pytest.raises(ValueError):
            w.append(b)
    assert len(read_episode(tmp_path / "e.vtw")) == 1


def test_stats_additivity(tmp_path):
    paths = []
    for i, n in enumerate((10, 20)):
        p = tmp_path / f"e{i}.vtw"
        write_episode(p, Episode({}, make_pairs(n, seed=i)))
        paths.append(p)
    whole = compute_stats(paths)
    parts = [compute_stats([p]) for p in paths]
    assert whole.pairs == 30 and whole.episodes == 2
    assert np.array_equal(whole.skew_hist, parts[0].skew_hist + parts[1].skew_hist)
    assert np.array_equal(whole.mask_ratio_hist, parts[0].mask_ratio_hist + parts[1].mask_ratio_hist)
    assert whole.masks_unmasked == parts[0].masks_unmasked + parts[1].masks_unmasked
    assert whole.max_abs_skew_us == max(p.max_abs_skew_us for p in parts)


def test_stats_failure_isolation(tmp_path):
    good = tmp_path / "good.vtw"
    write_episode(good, Episode({}, make_pairs(5)))
    bad = tmp_path / "bad.vtw"
    bad.write_bytes(b"VTWD")
    s = compute_stats([tmp_path / "missing.vtw", good, bad])
    assert s.pairs == 5 and s.episodes == 1 and len(s.failures) == 2
    d = s.as_dict()
    assert d["failures"] == 2 and "missing.vtw" in d["failure.0"]


def test_mask_ratio_histogram(tmp_path):
    pairs = make_pairs(4, extras=False)
    ratios = [0.60, 0.61, 0.79, 0.80]
    for p, r in zip(pairs, ratios):
        p.mask = PatchMask.from_masked(range(30), ratio=r)
    path = tmp_path / "m.vtw"
    write_episode(path, Episode({}, pairs))
    h = compute_stats([path]).mask_ratio_hist
    assert len(h) == len(RATIO_EDGES) - 1 == 10
    assert h[0] == 2 and h[-1] == 2 and h.sum() == 4
