import pytest
from hypothesis import given, strategies as st

from visuotactile.config import ConfigError, format_config, load_config, parse_config
from visuotactile.sim import ClockSpec, ContactEvent, SessionSpec
from visuotactile.wire import Pad


def test_defaults_from_empty():
    assert parse_config("# nothing\n\n") == SessionSpec()


def test_keys_and_comments():
    spec = parse_config("""
        duration_s = 12.5      # seconds
        rng_seed = 7
        device.drift_ppm = 50
        video.offset_us = 5e3
        fiducial_window_s = none
        contact = 0.5 1.0 right 4 10 2.0 3000 plateau
        contact = 1 2 0 1 1 1.5 100
    """)
    assert spec.duration_s == 12.5 and spec.rng_seed == 7
    assert spec.device_clock == ClockSpec(drift_ppm=50.0)
    assert spec.video_clock.offset_us == 5000 and isinstance(spec.video_clock.offset_us, int)
    assert spec.fiducial_window_s is None
    assert spec.contact_script[0] == ContactEvent(0.5, 1.0, Pad.RIGHT, (4, 10), 2.0, 3000, "plateau")
    assert spec.contact_script[1].pad_id == Pad.LEFT and spec.contact_script[1].profile == "gaussian"


@pytest.mark.parametrize("text,line", [
    ("duration_s = 1\nbogus = 3", 2),
    ("device.nope = 1", 1),
    ("just words", 1),
    ("rng_seed = 1.5", 1),
    ("\n\ncontact = 1 2 left", 3),
    ("contact = 0 1 middle 1 1 1 1", 1),
])
def test_errors_name_the_line(text, line):
    with pytest.raises(ConfigError) as ei:
        parse_config(text)
    assert ei.value.line_no == line


def test_base_is_overridden_not_replaced():
    base = SessionSpec(duration_s=3.0, rng_seed=9)
    spec = parse_config("rng_seed = 1", base)
    assert spec.duration_s == 3.0 and spec.rng_seed == 1


specs = st.builds(
    SessionSpec,
    duration_s=st.floats(0.1, 1000, allow_nan=False),
    rng_seed=st.integers(0, 2**31),
    device_clock=st.builds(ClockSpec, st.integers(-10**6, 10**6), st.floats(-500, 500), st.floats(0, 5000)),
    video_clock=st.builds(ClockSpec, st.integers(-10**6, 10**6), st.floats(-500, 500), st.floats(0, 5000)),
    fiducial_window_s=st.none() | st.floats(0.1, 10),
    contact_script=st.lists(st.builds(
        ContactEvent, st.floats(0, 5), st.floats(5, 10), st.sampled_from(list(Pad)),
        st.tuples(st.integers(0, 11), st.integers(0, 31)), st.floats(0.5, 4), st.integers(0, 4095),
        st.sampled_from(["gaussian", "plateau"])), max_size=3).map(tuple),
)


@given(specs)
def test_format_round_trip(spec):
    assert parse_config(format_config(spec)) == spec


def test_load_from_file(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("duration_s = 2\n", encoding="utf-8")
    assert load_config(p).duration_s == 2.0
