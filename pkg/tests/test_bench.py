import json

from visuotactile.bench import make_streams, run
from visuotactile.wire import FRAME_SIZE, Pad


def test_streams_shape():
    streams, receipts, video = make_streams(1000, seed=1)
    assert all(len(streams[p]) == 500 * FRAME_SIZE for p in Pad)
    assert receipts[Pad.LEFT].shape == (500, 2)
    assert abs(len(video) - 500 * 60 / 23) < 1


def test_report_fields():
    rep = run(3000, seed=2)
    assert rep["frames"] == 3000
    assert rep["pairs"] > 0.95 * 1500
    assert rep["frames_per_s"] > 0 and abs(rep["realtime_factor"] - rep["frames_per_s"] / 46) < 0.1
    json.dumps(rep)  # machine readable
