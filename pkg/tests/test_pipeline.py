import numpy as np

from visuotactile.pipeline import recover_video_clock, restamp_tactile, sync_session
from visuotactile.sim import ClockSpec, SessionSpec, simulate_session
from visuotactile.wire import Pad


def test_restamp_removes_receipt_jitter():
    s = simulate_session(SessionSpec(duration_s=30, rng_seed=6, receipt_latency_us=2000,
                                     receipt_jitter_std_us=1500))
    raw = sync_session(s.streams, s.receipts, s.video)
    smooth = sync_session(s.streams, s.receipts, s.video, restamp=True)
    truth = s.truth.tactile_emit_us[Pad.LEFT]
    err_raw = np.array([f.host_ts_us for f in raw.tactile[Pad.LEFT]]) - truth
    err_fit = np.array([f.host_ts_us for f in smooth.tactile[Pad.LEFT]]) - truth
    assert np.std(err_fit) < np.std(err_raw) / 5


def test_refine_flag():
    c = ClockSpec(drift_ppm=50)
    s = simulate_session(SessionSpec(duration_s=60, video_clock=c, device_clock=c))
    m, base, tally = recover_video_clock(s.video, refine=False)
    assert m is base and m.method != "interval-feasible"
    m2, _, _ = recover_video_clock(s.video)
    assert m2.method.startswith("interval")
    assert tally.samples == s.truth.n_codes


def test_restamp_short_input():
    assert restamp_tactile([]) == []
