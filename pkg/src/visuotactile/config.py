"""Session config documents.

UTF-8 text, one ``key = value`` per line, ``#`` starts a comment. Keys::

    duration_s, tactile_rate_hz, video_rate_hz, fiducial_rate_hz
    rng_seed, host_epoch_us
    device.offset_us, device.drift_ppm, device.jitter_std_us
    video.offset_us, video.drift_ppm, video.jitter_std_us
    fiducial_outlier_fraction, fiducial_outlier_offset_us, fiducial_window_s
    receipt_latency_us, receipt_jitter_std_us, image_payload_bytes
    contact = t_start t_end pad row col radius peak [gaussian|plateau]

``contact`` may repeat; ``pad`` is ``left``/``right`` or 0/1. Unknown keys
are an error so typos don't silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import fields, replace

from .sim import ClockSpec, ContactEvent, SessionSpec
from .wire import Pad


class ConfigError(ValueError):
    def __init__(self, line_no, msg):
        super().__init__(f"line {line_no}: {msg}" if line_no else msg)
        self.line_no = line_no


_INT_KEYS = {"rng_seed", "host_epoch_us", "fiducial_outlier_offset_us", "image_payload_bytes"}
_FLOAT_KEYS = {
    "duration_s", "tactile_rate_hz", "video_rate_hz", "fiducial_rate_hz",
    "fiducial_outlier_fraction", "receipt_latency_us", "receipt_jitter_std_us",
}
_CLOCK_KEYS = {"offset_us": int, "drift_ppm": float, "jitter_std_us": float}


def _number(text, kind):
    if kind is not int:
        return float(text)
    try:
        return int(text)
    except ValueError:
        v = float(text)  # allow 5e6
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {text!r}") from None
        return int(v)


def _pad(text):
    t = text.lower()
    if t in ("left", "0"):
        return Pad.LEFT
    if t in ("right", "1"):
        return Pad.RIGHT
    raise ValueError(f"unknown pad {text!r}")


def parse_contact(value):
    parts = value.split()
    if len(parts) not in (7, 8):
        raise ValueError("contact needs: t_start t_end pad row col radius peak [profile]")
    t0, t1 = float(parts[0]), float(parts[1])
    return ContactEvent(
        t0, t1, _pad(parts[2]), (int(parts[3]), int(parts[4])),
        float(parts[5]), int(parts[6]), parts[7].lower() if len(parts) == 8 else "gaussian",
    )


def parse_config(text, base: SessionSpec | None = None) -> SessionSpec:
    spec = base or SessionSpec()
    top, clocks = {}, {"device": {}, "video": {}}
    contacts = list(spec.contact_script)
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(no, f"expected 'key = value', got {raw.strip()!r}")
        try:
            if key == "contact":
                contacts.append(parse_contact(value))
            elif key in _INT_KEYS:
                top[key] = _number(value, int)
            elif key in _FLOAT_KEYS:
                top[key] = float(value)
            elif key == "fiducial_window_s":
                top[key] = None if value.lower() in ("none", "") else float(value)
            elif "." in key and key.split(".", 1)[0] in clocks:
                which, field_ = key.split(".", 1)
                if field_ not in _CLOCK_KEYS:
                    raise ValueError(f"unknown clock field {field_!r}")
                clocks[which][field_] = _number(value, _CLOCK_KEYS[field_])
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(no, str(exc)) from None
    spec = replace(
        spec,
        device_clock=replace(spec.device_clock, **clocks["device"]),
        video_clock=replace(spec.video_clock, **clocks["video"]),
        contact_script=tuple(contacts),
        **top,
    )
    return spec


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def format_config(spec: SessionSpec) -> str:
    """Inverse of :func:`parse_config` (comments are not preserved)."""
    lines = []
    for f in fields(SessionSpec):
        v = getattr(spec, f.name)
        if isinstance(v, ClockSpec):
            prefix = "device" if f.name == "device_clock" else "video"
            for cf in fields(ClockSpec):
                lines.append(f"{prefix}.{cf.name} = {getattr(v, cf.name)!r}")
        elif f.name == "contact_script":
            for ev in v:
                lines.append(
                    f"contact = {ev.t_start_s!r} {ev.t_end_s!r} {Pad(ev.pad_id).name.lower()} "
                    f"{ev.center[0]} {ev.center[1]} {ev.radius_taxels!r} {ev.peak_value} {ev.profile}"
                )
        else:
            lines.append(f"{f.name} = {v!r}" if v is not None else f"{f.name} = none")
    return "\n".join(lines) + "\n"
