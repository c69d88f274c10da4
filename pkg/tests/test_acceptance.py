"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import conftest  # noqa: E402
from oracles import (  # noqa: E402
    alpha_bar_product,
    brute_force_match_sparse,
    denoise_scalar,
    dense_attention,
    ema_closed_form,
    linear_betas,
)
from visuotactile import bench  # noqa: E402
from visuotactile.align import DEFAULT_TOLERANCE_US  # noqa: E402
from visuotactile.cli import run_cli  # noqa: E402
from visuotactile.diffusion import DiffusionSchedule, add_noise, denoise, make_schedule  # noqa: E402
from visuotactile.episode import read_episode  # noqa: E402
from visuotactile.fiducial import extract_code_samples  # noqa: E402
from visuotactile.fusion import cross_attend, ema_update, fuse, init_params  # noqa: E402
from visuotactile.pipeline import recover_video_clock, sync_session  # noqa: E402
from visuotactile.preprocess import (  # noqa: E402
    N_PATCHES,
    PatchMask,
    apply_mask,
    draw_mask,
    patchify,
    unpatchify,
)
from visuotactile.sim import ClockSpec, SessionSpec, simulate_session  # noqa: E402
from visuotactile.wire import (  # noqa: E402
    FRAME_SIZE,
    Pad,
    WireError,
    decode_frame,
    decode_stream,
    encode_frame,
    random_frame,
)


def report(n, ok, detail):
    conftest.ACCEPTANCE_LINES.append(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_1_wire_codec():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    frames = [random_frame(rng) for _ in range(100_000)]
    blobs = [encode_frame(f) for f in frames]
    roundtrip_bad = sum(encode_frame(decode_frame(b)) != b for b in blobs)
    stream_frames, _ = decode_stream(b"".join(blobs))
    stream_bad = sum(a != b for a, b in zip(stream_frames, frames)) + abs(len(stream_frames) - len(frames))

    blob = bytearray(blobs[0])
    silent = 0
    for bit in range(FRAME_SIZE * 8):
        bad = bytearray(blob)
        bad[bit // 8] ^= 0x80 >> (bit % 8)
        try:
            decode_frame(bytes(bad))
            silent += 1
        except WireError:
            pass

    accounting_bad = 0
    base = b"".join(blobs[:6])
    for _ in range(10_000):
        data = bytearray(base)
        for _ in range(rng.integers(1, 6)):
            data[rng.integers(len(data))] ^= 1 << int(rng.integers(8))
        at = int(rng.integers(len(data) + 1))
        data[at:at] = rng.integers(0, 256, int(rng.integers(0, 40)), dtype=np.uint8).tobytes()
        data = data[: len(data) - int(rng.integers(0, 50))]
        _, d = decode_stream(bytes(data))
        accounting_bad += d.accounted_bytes() != len(data)
    dt = time.perf_counter() - t0
    ok = roundtrip_bad == 0 and stream_bad == 0 and silent == 0 and accounting_bad == 0 and dt < 60
    report(1, ok, f"round-trip mismatches={roundtrip_bad + stream_bad} silent single-bit acceptances={silent} "
                  f"accounting violations={accounting_bad}/10000 runtime={dt:.1f}s")


def test_2_rates():
    s = simulate_session(SessionSpec(duration_s=10.0))
    per_pad = {p: decode_stream(s.streams[p])[1].frames_ok for p in Pad}
    samples, _ = extract_code_samples(s.video)
    codes = len({c.code_seq for _, c in samples})
    ok = per_pad[Pad.LEFT] == per_pad[Pad.RIGHT] == 230 and len(s.video) == 600 and codes == 300
    report(2, ok, f"frames/pad={per_pad[Pad.LEFT]},{per_pad[Pad.RIGHT]} video={len(s.video)} codes={codes}")


def _clock_errors(spec):
    s = simulate_session(spec)
    model, _, _ = recover_video_clock(s.video)
    idx = np.array([v.frame_index for v in s.video])
    err = model.predict(idx) - s.truth.video_capture_us
    return float(np.sqrt(np.mean(err**2))), float(np.max(np.abs(err))), model.method


def test_3_clock_recovery():
    t0 = time.perf_counter()
    noisy = ClockSpec(drift_ppm=50, jitter_std_us=2000)
    rms, _, m1 = _clock_errors(SessionSpec(duration_s=600, video_clock=noisy, device_clock=noisy,
                                           fiducial_outlier_fraction=0.1, rng_seed=3))
    clean = ClockSpec(drift_ppm=50)
    _, mx, m2 = _clock_errors(SessionSpec(duration_s=600, video_clock=clean, device_clock=clean))
    dt = time.perf_counter() - t0
    ok = rms < 5000 and mx <= 1.0
    report(3, ok, f"jittered rms={rms:.0f}us ({m1}) clean max={mx:.3f}us ({m2}) runtime={dt:.1f}s")


def _oracle_pairs(v_ts, l_ts, r_ts, tol):
    ml = brute_force_match_sparse(v_ts, l_ts, tol)
    mr = brute_force_match_sparse(v_ts, r_ts, tol)
    return [(v, ml[v][0], mr[v][0], ml[v][1], mr[v][1]) for v in sorted(set(ml) & set(mr))]


def test_4_alignment_oracle():
    cases = [
        SessionSpec(duration_s=60, rng_seed=1),
        SessionSpec(duration_s=60, rng_seed=2, video_clock=ClockSpec(drift_ppm=80, jitter_std_us=3000),
                    device_clock=ClockSpec(offset_us=4000, drift_ppm=-60, jitter_std_us=800),
                    receipt_latency_us=1200, receipt_jitter_std_us=900, fiducial_outlier_fraction=0.05),
        SessionSpec(duration_s=30, rng_seed=3, tactile_rate_hz=31.0, receipt_jitter_std_us=4000),
    ]
    mismatched = 0
    worst = 0.0
    total = 0
    for spec in cases:
        s = simulate_session(spec)
        res = sync_session(s.streams, s.receipts, s.video)
        v_ts = [v.decoded_host_ts_us for v in res.video]
        l_ts = [f.host_ts_us for f in res.tactile[Pad.LEFT]]
        r_ts = [f.host_ts_us for f in res.tactile[Pad.RIGHT]]
        expected = _oracle_pairs(v_ts, l_ts, r_ts, DEFAULT_TOLERANCE_US)
        left_pos = {id(f): i for i, f in enumerate(res.tactile[Pad.LEFT])}
        right_pos = {id(f): i for i, f in enumerate(res.tactile[Pad.RIGHT])}
        got = [(p.video.frame_index, left_pos[id(p.left)], right_pos[id(p.right)], p.skew_left_us,
                p.skew_right_us) for p in res.pairs]
        mismatched += got != expected
        total += len(got)
        for p in res.pairs:
            worst = max(worst, abs(p.skew_left_us), abs(p.skew_right_us))
    ok = mismatched == 0 and worst <= DEFAULT_TOLERANCE_US
    report(4, ok, f"sessions differing from brute force={mismatched}/{len(cases)} pairs={total} "
                  f"max|skew|={worst:.0f}us")


def test_5_mask_statistics():
    rng = np.random.default_rng(2024)
    draws = [draw_mask(rng) for _ in range(10_000)]
    frac = sum(d.unmasked for d in draws) / len(draws)
    counts = [d.masked_count for d in draws if not d.unmasked]
    ok = 0.04 <= frac <= 0.06 and min(counts) >= 29 and max(counts) <= 38
    report(5, ok, f"unmasked fraction={frac:.4f} masked counts in [{min(counts)}, {max(counts)}]")


def test_6_mask_identities():
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(200):
        img = rng.random((3, 24, 32))
        tok = rng.random((4, 4))
        bad += not np.array_equal(apply_mask(img, PatchMask.all_visible(), tok), img)
        none = PatchMask.from_masked(range(N_PATCHES))
        bad += not np.array_equal(apply_mask(img, none, tok), apply_mask(rng.random((3, 24, 32)), none, tok))
        plane = img[0]
        p = patchify(plane)
        covered = np.zeros((24, 32), dtype=int)
        for i in range(6):
            for j in range(8):
                covered[4 * i:4 * i + 4, 4 * j:4 * j + 4] += 1
                bad += not np.array_equal(p[i, j], plane[4 * i:4 * i + 4, 4 * j:4 * j + 4])
        bad += not (np.all(covered == 1) and np.array_equal(unpatchify(p), plane))
    report(6, bad == 0, f"identity violations={bad} over 200 random images")


def test_7_attention():
    rng = np.random.default_rng(7)
    worst_sum = 0.0
    query_dep = 0
    worst_oracle = 0.0
    for case in range(20):
        p = init_params(case, d=8, num_heads=2, hidden=8)
        q = rng.normal(0, 2, (int(rng.integers(1, 5)), 8))
        kv = rng.normal(0, 2, (int(rng.integers(1, 5)), 8))
        out, w, _ = cross_attend(q, kv, p, "fuse.r1", details=True)
        worst_sum = max(worst_sum, float(np.max(np.abs(w.sum(-1) - 1))))
        ref, _ = dense_attention(q, kv, p, "fuse.r1", heads=2)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(out - ref))))
        one = kv[:1]
        _, _, a = cross_attend(rng.normal(size=(1, 8)), one, p, details=True)
        _, _, b = cross_attend(rng.normal(size=(1, 8)), one, p, details=True)
        query_dep += not np.array_equal(a, b)
    big = init_params(42)
    z = fuse(rng.normal(size=768), rng.normal(size=768), big)
    ok = worst_sum <= 1e-6 and query_dep == 0 and worst_oracle <= 1e-10 and z.shape == (1536,)
    report(7, ok, f"max|sum-1|={worst_sum:.1e} single-key query-dependent={query_dep} "
                  f"max oracle diff={worst_oracle:.1e} fused length={z.shape[0]}")


def test_8_ema():
    rng = np.random.default_rng(8)
    t0 = rng.normal(size=5)
    w = rng.normal(size=5)
    target = {"p": t0.copy()}
    online = {"p": w}
    for _ in range(10_000):
        target = ema_update(target, online)
    err = float(np.max(np.abs(target["p"] - ema_closed_form(t0, w, 0.9995, 10_000))))
    report(8, err <= 1e-9, f"max closed-form error after 10000 steps={err:.1e}")


def test_9_diffusion():
    rng = np.random.default_rng(9)
    a = rng.normal(size=6)
    ident = DiffusionSchedule.constant(1.0, 0.3, 0.0, 16)
    identity_ok = np.array_equal(denoise(a, lambda x, o, k: np.zeros_like(x), None, ident), a)

    a0 = rng.integers(-2**20, 2**20, 6) / 1024
    eps = rng.integers(-2**20, 2**20, 6) / 1024
    inv = DiffusionSchedule.constant(1.0, 1.0, 0.0, 1)
    inversion_ok = denoise(a0 + eps, lambda x, o, k: eps, None, inv).tobytes() == a0.tobytes()

    s = make_schedule()
    A = rng.normal(0, 0.3, (6, 6))
    c = rng.normal(size=6)

    def pred(x, o, k):
        return A @ x + c * k

    aK = rng.normal(size=6)
    got = denoise(aK, pred, None, s)
    ref = denoise_scalar(aK, pred, s.alphas.tolist(), s.gammas.tolist(), s.timesteps.tolist())
    rec_err = float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))))

    direct = np.sqrt(alpha_bar_product(50, linear_betas()))
    ak, _ = add_noise(np.ones(1), 50, s, eps=np.zeros(1))
    ab_err = abs(float(ak[0]) - direct) / direct
    ok = identity_ok and inversion_ok and rec_err <= 1e-9 and ab_err <= 1e-12 and s.k_infer == 16
    report(9, ok, f"identity={identity_ok} inversion={inversion_ok} 16-step oracle err={rec_err:.1e} "
                  f"50-step alpha-bar rel err={ab_err:.1e}")


def test_10_end_to_end(tmp_path, capsys):
    def call(*argv):
        code = run_cli([str(x) for x in argv])
        out = capsys.readouterr().out
        return code, dict(line.split(" = ", 1) for line in out.splitlines() if " = " in line)

    codes = []
    c, _ = call("simulate", "--duration-s", 60, "--seed", 10, "--out", tmp_path / "sess")
    codes.append(c)
    c, dec = call("decode", "--in", tmp_path / "sess")
    codes.append(c)
    c, sync = call("sync", "--in", tmp_path / "sess", "--out", tmp_path / "ep.vtw")
    codes.append(c)
    c, _ = call("pack", "--in", tmp_path / "ep.vtw", "--out", tmp_path / "packed.vtw")
    codes.append(c)
    runs = []
    for _ in range(2):
        c, doc = call("fuse-eval", "--in", tmp_path / "packed.vtw", "--seed", 42)
        codes.append(c)
        runs.append(doc)
    n_ep = len(read_episode(tmp_path / "packed.vtw"))
    ok = (
        codes == [0] * 6
        and dec["left.frames_crc_fail"] == "0"
        and int(sync["pairs_emitted"]) == n_ep == int(runs[0]["pairs"])
        and runs[0]["loss_finite"] == "True"
        and runs[0]["loss_digest"] == runs[1]["loss_digest"]
        and runs[0]["loss_mean"] == runs[1]["loss_mean"]
    )
    report(10, ok, f"exit codes={codes} report pairs={sync['pairs_emitted']} episode pairs={n_ep} "
                   f"loss_mean={runs[0]['loss_mean']} digests={runs[0]['loss_digest']},{runs[1]['loss_digest']}")


def test_11_performance():
    rep = bench.run(100_000, seed=0, repeats=3)
    json.dumps(rep)
    ok = rep["frames_per_s"] >= 50_000
    report(11, ok, f"frames/s={rep['frames_per_s']:.0f} realtime factor={rep['realtime_factor']:.0f}x "
                   f"(decode {rep['decode_s']:.2f}s, align {rep['align_s']:.2f}s for {rep['frames']} frames)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider", "-W", "ignore::pytest.PytestAssertRewriteWarning"]))
