"""
From a simulated session to an episode file
===========================================

Simulate, synchronize, write one episode, then aggregate stats the way
``vtcap inspect`` does.
"""

import tempfile
from pathlib import Path

from visuotactile.episode import Episode, compute_stats, read_episode, write_episode
from visuotactile.pipeline import sync_session
from visuotactile.sim import ClockSpec, SessionSpec, simulate_session

spec = SessionSpec(duration_s=30, rng_seed=5, device_clock=ClockSpec(drift_ppm=20),
                   receipt_latency_us=900, receipt_jitter_std_us=300)
s = simulate_session(spec)
res = sync_session(s.streams, s.receipts, s.video)
print(res.report)
print("video clock", res.video_model.method, "%.4f us/frame" % res.video_model.slope_us_per_frame)

out = Path(tempfile.mkdtemp()) / "episode.vtw"
write_episode(out, Episode({"source": "demo"}, res.pairs))
print(out.stat().st_size, "bytes for", len(res.pairs), "pairs")
assert read_episode(out).pairs == res.pairs

stats = compute_stats([out, out.with_name("missing.vtw")])
for k, v in stats.as_dict().items():
    print(f"{k:18s} {v}")
