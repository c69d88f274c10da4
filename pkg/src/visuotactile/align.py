"""Pair host-timestamped video frames with left/right tactile frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wire import Pad

# half the 23 Hz tactile period
DEFAULT_TOLERANCE_US = 21_739


class UnsortedInput(ValueError):
    pass


@dataclass(eq=False)
class SyncedPair:
    host_ts_us: float
    left: object  # TaxelFrame
    right: object  # TaxelFrame
    video: object  # VideoFrameRecord
    skew_left_us: float
    skew_right_us: float
    proprio: np.ndarray | None = None
    image: np.ndarray | None = None  # optional precomputed 24x32 tactile image
    mask: object = None  # optional PatchMask drawn for this pair

    def __eq__(self, other):
        if not isinstance(other, SyncedPair):
            return NotImplemented

        def arr_eq(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (
            self.host_ts_us == other.host_ts_us
            and self.left == other.left
            and self.right == other.right
            and self.video == other.video
            and self.skew_left_us == other.skew_left_us
            and self.skew_right_us == other.skew_right_us
            and arr_eq(self.proprio, other.proprio)
            and arr_eq(self.image, other.image)
            and _mask_eq(self.mask, other.mask)
        )


def _mask_eq(a, b):
    if a is None or b is None:
        return a is b
    return a.ratio == b.ratio and np.array_equal(a.bits, b.bits)


@dataclass
class AlignmentReport:
    pairs_emitted: int = 0
    video_unmatched: int = 0
    tactile_unused_left: int = 0
    tactile_unused_right: int = 0
    max_abs_skew_us: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)


def _check_sorted(ts, what):
    if len(ts) > 1 and np.any(np.diff(ts) < 0):
        raise UnsortedInput(f"{what} timestamps are not sorted")


def match_one_to_one(video_ts, tactile_ts, tolerance_us):
    """Greedy one-to-one matching by ascending |skew|.

    Candidates are all (video, tactile) pairs with ``|t_tac - t_vid| <=
    tolerance``; ties go to the lower video index, then the lower tactile
    index. Returns ``{video_idx: (tactile_idx, skew_us)}`` with
    ``skew = t_tac - t_vid``.
    """
    video_ts = np.asarray(video_ts, dtype=np.float64)
    tactile_ts = np.asarray(tactile_ts, dtype=np.float64)
    if len(video_ts) == 0 or len(tactile_ts) == 0:
        return {}
    lo = np.searchsorted(tactile_ts, video_ts - tolerance_us, side="left")
    hi = np.searchsorted(tactile_ts, video_ts + tolerance_us, side="right")
    counts = hi - lo
    vi = np.repeat(np.arange(len(video_ts)), counts)
    starts = np.repeat(lo, counts)
    ti = starts + (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
    skew = tactile_ts[ti] - video_ts[vi]
    ok = np.abs(skew) <= tolerance_us
    vi, ti, skew = vi[ok], ti[ok], skew[ok]
    order = np.lexsort((ti, vi, np.abs(skew)))
    used_v = set()
    used_t = set()
    out = {}
    for k in order.tolist():
        v = int(vi[k])
        t = int(ti[k])
        if v in used_v or t in used_t:
            continue
        used_v.add(v)
        used_t.add(t)
        out[v] = (t, float(skew[k]))
    return out


def align_streams(video, left, right, tolerance_us=DEFAULT_TOLERANCE_US):
    """Build synced pairs; a pair needs both pads matched to the same video frame.

    ``video`` records need ``decoded_host_ts_us``; tactile frames need
    ``host_ts_us``. Each list must be sorted by its timestamp.
    Returns ``(pairs, AlignmentReport)``.
    """
    if any(v.decoded_host_ts_us is None for v in video):
        raise ValueError("video frames need decoded_host_ts_us; apply a clock model first")
    for frames, pad in ((left, Pad.LEFT), (right, Pad.RIGHT)):
        if any(f.host_ts_us is None for f in frames):
            raise ValueError(f"{pad.name.lower()} tactile frames need host_ts_us")
        if any(f.pad_id != pad for f in frames):
            raise ValueError(f"{pad.name.lower()} stream contains frames of another pad")
    v_ts = np.array([v.decoded_host_ts_us for v in video], dtype=np.float64)
    l_ts = np.array([f.host_ts_us for f in left], dtype=np.float64)
    r_ts = np.array([f.host_ts_us for f in right], dtype=np.float64)
    _check_sorted(v_ts, "video")
    _check_sorted(l_ts, "left tactile")
    _check_sorted(r_ts, "right tactile")

    ml = match_one_to_one(v_ts, l_ts, tolerance_us)
    mr = match_one_to_one(v_ts, r_ts, tolerance_us)
    pairs = []
    used_l = used_r = 0
    for v in sorted(set(ml) & set(mr)):
        li, sl = ml[v]
        ri, sr = mr[v]
        pairs.append(SyncedPair(float(v_ts[v]), left[li], right[ri], video[v], sl, sr))
        used_l += 1
        used_r += 1
    report = AlignmentReport(
        pairs_emitted=len(pairs),
        video_unmatched=len(video) - len(pairs),
        tactile_unused_left=len(left) - used_l,
        tactile_unused_right=len(right) - used_r,
        max_abs_skew_us=max((max(abs(p.skew_left_us), abs(p.skew_right_us)) for p in pairs), default=0.0),
    )
    return pairs, report
