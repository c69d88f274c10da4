"""
Recovering video capture times from fiducials
=============================================

The video camera never reports host time. A screen in view shows a code
with the host clock, refreshed at 30 Hz, and the camera captures at 60 Hz.
Fitting frame index against the decoded codes gives each frame a host time.
"""

import numpy as np

from visuotactile.clock import fit_clock_model, refine_clock_model
from visuotactile.fiducial import extract_code_samples
from visuotactile.sim import ClockSpec, SessionSpec, simulate_session

clock = ClockSpec(drift_ppm=50)
session = simulate_session(SessionSpec(duration_s=600, video_clock=clock, device_clock=clock))
truth = session.truth.video_capture_us
idx = np.array([v.frame_index for v in session.video])

samples, tally = extract_code_samples(session.video)
print(tally.samples, "code samples,", tally.unrecoverable, "unreadable")

# %%
# A plain robust fit on the first frame showing each code runs early: the
# code was drawn up to one video period before that capture.

plain = fit_clock_model([(i, c.host_ts_us) for i, c in samples])
err = plain.predict(idx) - truth
print("plain fit    rms %8.1f us   mean %8.1f us" % (np.sqrt(np.mean(err**2)), err.mean()))

# %%
# Every code is visible over a run of frames, which brackets when it was
# drawn. Intersecting those brackets over the session pins the line down.

refined = refine_clock_model(plain, tally.observations)
err = refined.predict(idx) - truth
print("%-12s rms %8.3f us   max  %8.3f us" % (refined.method, np.sqrt(np.mean(err**2)), np.abs(err).max()))

# %%
# With 2 ms of timing jitter and 10% of codes shown with a wrong time the
# error grows to roughly the jitter.

noisy = ClockSpec(drift_ppm=50, jitter_std_us=2000)
session = simulate_session(SessionSpec(duration_s=600, video_clock=noisy, device_clock=noisy,
                                       fiducial_outlier_fraction=0.1, rng_seed=3))
samples, tally = extract_code_samples(session.video)
m = refine_clock_model(fit_clock_model([(i, c.host_ts_us) for i, c in samples]), tally.observations)
err = m.predict(np.arange(len(session.video))) - session.truth.video_capture_us
print("%-12s rms %8.1f us" % (m.method, np.sqrt(np.mean(err**2))))
