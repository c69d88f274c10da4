"""Affine clock models mapping a local clock (frame index or device ticks) to host time."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import log_ndtr

INLIER_FLOOR_US = 1000.0
INLIER_MAD_FACTOR = 3.0
_CHUNK_ELEMS = 1 << 22


class ClockFitError(ValueError):
    pass


class TooFewSamples(ClockFitError):
    pass


class DegenerateFit(ClockFitError):
    pass


@dataclass(frozen=True)
class ClockModel:
    """``host_us = slope_us_per_frame * x + intercept_us``.

    Evaluation goes through an integer origin (``x_origin``, ``y_origin``)
    plus a small float offset, because host times near 1.7e15 us leave only
    quarter-microsecond resolution in a float64 intercept.
    """

    slope_us_per_frame: float
    intercept_us: float
    residual_rms_us: float
    inlier_count: int
    outlier_count: int
    x_origin: int = 0
    y_origin: int = 0
    origin_offset_us: float | None = None
    method: str = "theil-sen"

    def __post_init__(self):
        if self.origin_offset_us is None:
            off = self.intercept_us - self.y_origin + self.slope_us_per_frame * self.x_origin
            object.__setattr__(self, "origin_offset_us", float(off))

    def predict(self, x):
        """Host time (float us) for local clock value(s) ``x``."""
        dx = np.asarray(x, dtype=np.int64) - self.x_origin
        return self.y_origin + (self.origin_offset_us + self.slope_us_per_frame * dx)

    def predict_relative(self, x):
        """``predict(x) - y_origin`` without the large origin term."""
        dx = np.asarray(x, dtype=np.int64) - self.x_origin
        return self.origin_offset_us + self.slope_us_per_frame * dx


def _from_origin(slope, offset, x0, y0, rms, n_in, n_out, method):
    slope, offset = float(slope), float(offset)
    intercept = y0 + offset - slope * x0
    return ClockModel(slope, intercept, float(rms), n_in, n_out, x0, y0, offset, method)


def _pairwise_slope_chunks(x, y):
    """Yield all pairwise slopes (j > i) in bounded-size chunks."""
    n = len(x)
    rows = max(1, _CHUNK_ELEMS // max(n, 1))
    for a in range(0, n - 1, rows):
        b = min(a + rows, n - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            slopes = (y[None, a + 1 :] - y[a:b, None]) / (x[None, a + 1 :] - x[a:b, None])
        upper = np.arange(a + 1, n)[None, :] > np.arange(a, b)[:, None]
        yield slopes[upper]


def _bin_index(s, lo, width, nbins):
    # 0: below lo, 1..nbins: inside, nbins + 1: at/above the top edge
    idx = np.floor((s - lo) / width)
    return (np.clip(idx, -1, nbins) + 1).astype(np.int64)


def theil_sen_slope(x, y, max_direct=3000, nbins=1 << 16):
    """Median of all pairwise slopes ``(y_j - y_i) / (x_j - x_i)``, ``x`` strictly increasing.

    Small inputs materialize every pair. Larger ones narrow a bracket around
    the median rank(s) with chunked histogram passes, then select exactly
    among the slopes falling in the bracket, so memory stays bounded.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n <= max_direct:
        i, j = np.triu_indices(n, k=1)
        return float(np.median((y[j] - y[i]) / (x[j] - x[i])))

    m = n * (n - 1) // 2
    k_lo, k_hi = (m - 1) // 2, m // 2
    sub = np.unique(np.linspace(0, n - 1, 2000).astype(int))
    i, j = np.triu_indices(len(sub), k=1)
    guess = (y[sub][j] - y[sub][i]) / (x[sub][j] - x[sub][i])
    lo, hi = (float(v) for v in np.quantile(guess, [0.4, 0.6]))
    while True:
        width = max(hi - lo, 4 * np.spacing(max(abs(lo), abs(hi), 1e-300))) / nbins
        counts = np.zeros(nbins + 2, dtype=np.int64)
        for s in _pairwise_slope_chunks(x, y):
            counts += np.bincount(_bin_index(s, lo, width, nbins), minlength=nbins + 2)
        cum = np.cumsum(counts)
        b_lo = int(np.searchsorted(cum, k_lo, side="right"))
        b_hi = int(np.searchsorted(cum, k_hi, side="right"))
        span = width * nbins
        if b_lo == 0:
            lo -= 2 * span
            continue
        if b_hi == nbins + 1:
            hi += 2 * span
            continue
        below = int(cum[b_lo - 1])
        if cum[b_hi] - below <= 2_000_000:
            break
        if width <= 4 * np.spacing(max(abs(lo), abs(hi))):
            # all remaining slopes agree to float resolution
            return lo + (b_lo - 0.5) * width
        lo, hi = lo + (b_lo - 1) * width, lo + b_hi * width
    picked = []
    for s in _pairwise_slope_chunks(x, y):
        b = _bin_index(s, lo, width, nbins)
        picked.append(s[(b >= b_lo) & (b <= b_hi)])
    vals = np.sort(np.concatenate(picked))
    return float(0.5 * (vals[k_lo - below] + vals[k_hi - below]))


def fit_clock_model(samples) -> ClockModel:
    """Robust affine fit ``host_ts ~ slope * x + intercept``.

    ``samples`` is a sequence of ``(x, host_ts_us)`` with ``x`` strictly
    increasing. Theil-Sen slope, median intercept, then one least-squares
    refit over inliers (|residual| <= 3 * median |residual|, floored at 1 ms).
    """
    samples = list(samples)
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(samples)}")
    xs = np.array([int(s[0]) for s in samples], dtype=np.int64)
    ys_int = np.array([int(round(s[1])) for s in samples], dtype=np.int64)
    y_frac = np.array([float(s[1]) - round(s[1]) for s in samples])
    if np.any(np.diff(xs) <= 0):
        raise ValueError("sample x values must be strictly increasing")
    x0, y0 = int(xs[0]), int(ys_int[0])
    x = (xs - x0).astype(np.float64)
    y = (ys_int - y0).astype(np.float64) + y_frac

    slope = theil_sen_slope(x, y)
    if not np.isfinite(slope) or slope <= 0:
        raise DegenerateFit(f"non-positive or non-finite slope {slope}")
    offset = float(np.median(y - slope * x))
    resid = y - (slope * x + offset)
    thr = max(INLIER_MAD_FACTOR * float(np.median(np.abs(resid))), INLIER_FLOOR_US)
    inl = np.abs(resid) <= thr
    if inl.sum() < 2:
        raise DegenerateFit("fewer than two inliers")
    xi, yi = x[inl], y[inl]
    if np.ptp(xi) > 0:
        xm, ym = xi.mean(), yi.mean()
        slope_ls = float(np.dot(xi - xm, yi - ym) / np.dot(xi - xm, xi - xm))
        if np.isfinite(slope_ls) and slope_ls > 0:
            slope = slope_ls
            offset = float(ym - slope * xm)
    rms = float(np.sqrt(np.mean((yi - (slope * xi + offset)) ** 2)))
    if not np.isfinite(rms):
        raise DegenerateFit("non-finite residuals")
    return _from_origin(slope, offset, x0, y0, rms, int(inl.sum()), int((~inl).sum()), "theil-sen")


def apply_clock_model(model: ClockModel, frames):
    """Copies of ``frames`` with ``decoded_host_ts_us`` filled from the model."""
    idx = np.array([f.frame_index for f in frames], dtype=np.int64)
    ts = model.predict(idx) if len(frames) else []
    return [replace(f, decoded_host_ts_us=float(t)) for f, t in zip(frames, ts)]


def _log_interval_prob(lo, hi):
    """log(Phi(hi) - Phi(lo)) for lo < hi, stable in both tails."""
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    lb = log_ndtr(b)
    la = log_ndtr(a)
    return lb + np.log1p(-np.exp(np.minimum(la - lb, -1e-300)))


def refine_clock_model(model: ClockModel, observations, refresh_period_us=None,
                       ambiguity_us=1000.0, consistency_us=1.0) -> ClockModel:
    """Sharpen a video clock model using every frame that showed a fiducial.

    A frame showing code ``j`` was captured no earlier than the refresh
    ``T_j`` and before the next refresh ``T_{j+1}``. The first-appearance fit
    is biased early by up to one video period, so the model is re-fit
    against these intervals:

    * if some line satisfies every interval to within ``consistency_us``
      (no capture jitter; codes carry whole microseconds), take the
      line maximizing the smallest slack, unless the feasible band is wider
      than ``ambiguity_us`` (capture phase locked to the refresh grid), in
      which case the earliest feasible line is used, i.e. capture is assumed
      to coincide with refresh as the first-appearance rule does;
    * otherwise fit line and Gaussian capture jitter by interval-censored
      maximum likelihood.

    ``observations`` holds ``(frame_index, FiducialCode)`` for every frame
    whose fiducial decoded, e.g. ``SampleTally.observations``.
    """
    obs = sorted(observations, key=lambda o: o[0])
    if len(obs) < 2:
        raise TooFewSamples("need at least 2 fiducial observations")
    x = np.array([o[0] for o in obs], dtype=np.int64)
    seq = np.array([o[1].code_seq for o in obs], dtype=np.int64)
    lo_abs = np.array([o[1].host_ts_us for o in obs], dtype=np.int64)
    base = model.predict_relative(x)
    lo = (lo_abs - model.y_origin).astype(np.float64) - base

    first = np.r_[True, seq[1:] != seq[:-1]]
    if refresh_period_us is None:
        d_seq = (seq[first][1:] - seq[first][:-1]) & 0xFFFF
        d_ts = np.diff(lo_abs[first])
        good = (d_seq == 1) & (d_ts > 0)
        if not good.any():
            raise DegenerateFit("cannot estimate the fiducial refresh period")
        refresh_period_us = float(np.median(d_ts[good]))
    tol = refresh_period_us + 4 * model.residual_rms_us + INLIER_FLOOR_US
    keep = np.abs(lo - np.median(lo)) <= tol
    if keep.sum() < 2:
        raise DegenerateFit("no consistent fiducial observations")

    # upper bound: the next code's shown time when it was observed, else one period later
    next_ts = {}
    for s, t, k in zip(seq[first], lo_abs[first], keep[first]):
        if k:
            next_ts[(int(s) - 1) & 0xFFFF] = int(t)
    hi_abs = np.array(
        [next_ts.get(int(s), int(t) + refresh_period_us) for s, t in zip(seq, lo_abs)],
        dtype=np.float64,
    )
    hi = (hi_abs - lo_abs) + lo
    x, lo, hi = x[keep], lo[keep], hi[keep]
    n_out = int((~keep).sum())

    xc = float(x.mean())
    xs = max(float(np.ptp(x)) / 2, 1.0)
    xn = (x - xc) / xs
    # rows: (da*xn + db) - lo >= s  and  hi - (da*xn + db) >= s
    ones = np.ones_like(xn)
    A = np.vstack([np.column_stack([-xn, -ones, ones]), np.column_stack([xn, ones, ones])])
    b = np.concatenate([-lo, hi])
    free = [(None, None)] * 3
    res = linprog([0, 0, -1], A_ub=A, b_ub=b, bounds=free, method="highs")
    if res.status != 0:
        raise DegenerateFit(f"interval program failed: {res.message}")
    da, db, margin = res.x
    method = "interval-feasible"
    sigma = 0.0
    if margin >= -consistency_us:
        A_f, b_f = A[:, :2], b + max(-margin, 0.0)
        band = [linprog(c, A_ub=A_f, b_ub=b_f, bounds=free[:2], method="highs") for c in ([0, 1], [0, -1])]
        if all(r.status == 0 for r in band) and band[1].x[1] - band[0].x[1] > ambiguity_us:
            da, db = band[0].x
            method = "interval-earliest"
    else:
        method = "interval-ml"
        da, db, sigma = _censored_ml(xn, lo, hi, da, db)

    slope = model.slope_us_per_frame + da / xs
    # line at x: base(x) + da*(x - xc)/xs + db, re-expressed around the model origin
    offset = model.origin_offset_us + db - da * (xc - model.x_origin) / xs
    return _from_origin(slope, offset, model.x_origin, model.y_origin, sigma,
                        int(len(x)), n_out, method)


def _censored_ml(xn, lo, hi, da0, db0):
    """Interval-censored Gaussian fit of ``lo <= da*xn + db + e < hi``, e ~ N(0, sigma^2)."""
    lo_ms, hi_ms = lo / 1000.0, hi / 1000.0

    def nll(p):
        da, db, log_s = p
        mu = da * xn + db
        s = np.exp(log_s)
        return -np.sum(_log_interval_prob((lo_ms - mu) / s, (hi_ms - mu) / s))

    mid = 0.5 * (lo_ms + hi_ms)
    da = da0 / 1000.0 if np.isfinite(da0) else 0.0
    start = np.array([da, float(np.median(mid - da * xn)), 0.0])
    r = minimize(nll, start, method="Nelder-Mead",
                 options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 4000})
    r = minimize(nll, r.x, method="L-BFGS-B")
    da, db, log_s = r.x
    return float(da * 1000.0), float(db * 1000.0), float(np.exp(log_s) * 1000.0)
