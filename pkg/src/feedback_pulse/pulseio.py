"""Text formats for pulses and profiles.

* pulse JSON: lossless, phases in radians (``format_version`` 1)
* shape file: JCAMP-DX style amplitude/phase list, phases in degrees
* profile CSV: one row per offset, metrics as ``#`` comment lines
* SVG: profile components or phase-vs-time plots

Every writer is deterministic: the same input gives the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from typing import Any, Optional, Union

import numpy as np

from .bloch import TWO_PI, InvalidParameterError, Magnetization, PulseParameters, PulseSequence
from .designer import DesignReport
from .profile import Profile, ProfileMetrics

FORMAT_NAME = "feedback-pulse"
FORMAT_VERSION = 1
CSV_HEADER = "offset_hz,mx,my,mz,transverse,phase_deg"
# Below this transverse magnitude the CSV phase field is left empty.
CSV_PHASE_MIN_TRANSVERSE = 1e-12


class PulseParseError(ValueError):
    """Malformed or inconsistent pulse file."""


def atomic_write(path: Union[str, os.PathLike], text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Pulse JSON
# ---------------------------------------------------------------------------


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def write_pulse_json(item: Union[DesignReport, PulseSequence]) -> str:
    """Serialize a design report or a bare sequence.

    Floats are written with Python's shortest round-trip repr, so reading the
    text back reproduces every phase bit for bit.
    """
    if isinstance(item, DesignReport):
        seq = item.sequence
        converged: Optional[bool] = item.converged
    else:
        seq = item
        converged = seq.metadata.get("converged")
    meta = dict(seq.metadata)
    doc = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "phase_unit": "rad",
        "mode": meta.get("mode"),
        "params": {
            "amplitude_hz": seq.params.amplitude_hz,
            "flip_per_step_deg": seq.params.flip_per_step_deg,
            "dwell_s": seq.params.dwell_s,
        },
        "band_hz": meta.get("band_hz"),
        "pass_hz": meta.get("pass_hz"),
        "n_steps": len(seq),
        "duration_s": seq.duration_s,
        "converged": converged,
        "metadata": _jsonable(meta),
        "phases_rad": [float(p) for p in seq.phases_rad.tolist()],
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def _reject_constant(name: str):
    raise PulseParseError(f"non-finite number {name!r} is not allowed")


def _number(doc: dict, key: str, positive: bool = True) -> float:
    if key not in doc:
        raise PulseParseError(f"missing field {key!r}")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise PulseParseError(f"field {key!r} must be a finite number, got {v!r}")
    if positive and not v > 0:
        raise PulseParseError(f"field {key!r} must be positive, got {v!r}")
    return float(v)


def read_pulse_json(text: str) -> PulseSequence:
    """Parse pulse JSON; raises :class:`PulseParseError` naming the offending field."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise PulseParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise PulseParseError("top level must be a JSON object")
    if doc.get("format") != FORMAT_NAME:
        raise PulseParseError(f"field 'format': expected {FORMAT_NAME!r}, got {doc.get('format')!r}")
    if doc.get("format_version") != FORMAT_VERSION:
        raise PulseParseError(f"field 'format_version': unsupported version {doc.get('format_version')!r}")
    if doc.get("phase_unit", "rad") != "rad":
        raise PulseParseError(f"field 'phase_unit': expected 'rad', got {doc.get('phase_unit')!r}")

    params_doc = doc.get("params")
    if not isinstance(params_doc, dict):
        raise PulseParseError("field 'params' must be an object")
    params = PulseParameters(_number(params_doc, "amplitude_hz"), _number(params_doc, "flip_per_step_deg"))
    if "dwell_s" in params_doc and _number(params_doc, "dwell_s") != params.dwell_s:
        raise PulseParseError("field 'params.dwell_s' is inconsistent with amplitude and flip angle")

    phases = doc.get("phases_rad")
    if not isinstance(phases, list):
        raise PulseParseError("field 'phases_rad' must be a list")
    for i, p in enumerate(phases):
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not math.isfinite(p):
            raise PulseParseError(f"field 'phases_rad[{i}]': not a finite number ({p!r})")
        if not 0.0 <= p < TWO_PI:
            raise PulseParseError(f"field 'phases_rad[{i}]': {p!r} outside [0, 2*pi)")
    n_steps = doc.get("n_steps")
    if n_steps != len(phases):
        raise PulseParseError(f"field 'n_steps': says {n_steps!r} but {len(phases)} phases present")

    meta = doc.get("metadata") or {}
    if not isinstance(meta, dict):
        raise PulseParseError("field 'metadata' must be an object")
    meta = dict(meta)
    for key in ("mode", "band_hz", "pass_hz", "converged"):
        if doc.get(key) is not None:
            meta[key] = doc[key]
    return PulseSequence(params, np.asarray(phases, dtype=float), meta)


# ---------------------------------------------------------------------------
# Shape file
# ---------------------------------------------------------------------------


def _deg(theta: float) -> str:
    text = f"{math.degrees(theta):.6f}"
    return "0.000000" if text == "360.000000" else text


def write_shape_file(seq: PulseSequence, title: Optional[str] = None) -> str:
    """JCAMP-DX shaped-pulse text: ``amplitude, phase`` per step, phase in degrees."""
    if len(seq) == 0:
        raise InvalidParameterError("cannot export an empty sequence as a shape")
    if "amplitude_percent" in seq.metadata:
        raise InvalidParameterError("amplitude-modulated pulses cannot be exported as constant-amplitude shapes")
    meta = seq.metadata
    title = title or f"feedback pulse ({meta.get('mode', 'unknown')})"
    lines = [
        f"##TITLE= {title}",
        "##JCAMP-DX= 5.00",
        "##DATA TYPE= Shape Data",
        "##ORIGIN= feedback_pulse",
        "##$PHASE UNIT= degrees",
        f"##$AMPLITUDE HZ= {seq.params.amplitude_hz!r}",
        f"##$FLIP PER STEP DEG= {seq.params.flip_per_step_deg!r}",
        f"##$DWELL S= {seq.params.dwell_s!r}",
        f"##$DURATION S= {seq.duration_s!r}",
        f"##$MODE= {meta.get('mode', '')}",
        f"##$TRANSFORM= {meta.get('transform', '')}",
        f"##NPOINTS= {len(seq)}",
        "##XYPOINTS= (XY..XY)",
    ]
    lines.extend(f"100.000000, {_deg(p)}" for p in seq.phases_rad.tolist())
    lines.append("##END=")
    return "\n".join(lines) + "\n"


def write_phase_csv(seq: PulseSequence) -> str:
    """Per-step table ``step,time_s,amplitude_percent,phase_deg``."""
    out = ["step,time_s,amplitude_percent,phase_deg"]
    dt = seq.params.dwell_s
    for i, p in enumerate(seq.phases_rad.tolist()):
        out.append(f"{i},{i * dt:.9g},100,{math.degrees(p):.9g}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Profile CSV
# ---------------------------------------------------------------------------


def _g(x: float) -> str:
    return f"{x + 0.0:.9g}"


def write_profile_csv(profile: Profile, metrics: Optional[ProfileMetrics] = None) -> str:
    rows = [CSV_HEADER]
    tr = profile.transverse
    for nu, x, y, z, t in zip(profile.offsets_hz, profile.mx, profile.my, profile.mz, tr):
        phase = "" if t < CSV_PHASE_MIN_TRANSVERSE else _g(math.degrees(math.atan2(y, x)) % 360.0)
        rows.append(",".join([_g(nu), _g(x), _g(y), _g(z), _g(t), phase]))
    rows.append("# initial_state=" + " ".join(_g(v) for v in profile.initial_state))
    if metrics is not None:
        for key, value in metrics.as_dict().items():
            rows.append(f"# {key}={'' if value is None else _g(value)}")
    return "\n".join(rows) + "\n"


def read_profile_csv(text: str) -> tuple[Profile, dict[str, Optional[float]]]:
    """Parse :func:`write_profile_csv` output back into a profile and its metrics."""
    data, comments = [], {}
    initial = (0.0, 0.0, 1.0)
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise PulseParseError(f"line 1: expected header {CSV_HEADER!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "initial_state":
                initial = tuple(float(v) for v in value.split())
            else:
                comments[key] = float(value) if value else None
            continue
        fields = next(csv.reader(io.StringIO(line)))
        if len(fields) != 6:
            raise PulseParseError(f"line {lineno}: expected 6 fields, got {len(fields)}")
        data.append([float(v) for v in fields[:4]])
    arr = np.array(data, dtype=float).reshape(-1, 4)
    return Profile(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], Magnetization(*initial)), comments


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

_W, _H = 720, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 30, 60
_COLORS = {"mx": "#d62728", "my": "#2ca02c", "mz": "#1f77b4", "phase": "#444444"}


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _svg(x_label: str, y_label: str, xr, yr, series: list[tuple[str, np.ndarray, np.ndarray]]) -> str:
    (x0, x1), (y0, y1) = xr, yr
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def sx(x):
        return _LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return _TOP + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        '<g id="axes" stroke="black" stroke-width="1">',
        f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}"/>',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{_TOP + ph}" x2="{sx(t):.2f}" y2="{_TOP + ph + 5}"/>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{_LEFT - 5}" y1="{sy(t):.2f}" x2="{_LEFT}" y2="{sy(t):.2f}"/>')
    out.append("</g>")
    out.append('<g id="labels" font-family="sans-serif" font-size="12" fill="black">')
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.2f}" y="{_TOP + ph + 20}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{_LEFT - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{_LEFT + pw / 2:.2f}" y="{_H - 15}" text-anchor="middle">{x_label}</text>')
    out.append(
        f'<text x="18" y="{_TOP + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_TOP + ph / 2:.2f})">{y_label}</text>'
    )
    out.append("</g>")
    for i, (name, xs, ys) in enumerate(series):
        color = _COLORS.get(name, "black")
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs.tolist(), ys.tolist()))
        out.append(f'<polyline id="{name}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(
            f'<text x="{_LEFT + pw - 10}" y="{_TOP + 15 + 15 * i}" font-family="sans-serif" '
            f'font-size="12" text-anchor="end" fill="{color}">{name}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot_svg(item: Union[Profile, PulseSequence]) -> str:
    """Plot a profile (mx, my, mz against offset in kHz) or a sequence's phases against time."""
    if isinstance(item, PulseSequence):
        t_ms = np.arange(len(item)) * item.params.dwell_s * 1e3
        xr = (0.0, float(t_ms[-1])) if len(item) > 1 else (0.0, 1.0)
        series = [("phase", t_ms, np.degrees(item.phases_rad))] if len(item) else []
        return _svg("time (ms)", "RF phase (deg)", xr, (0.0, 360.0), series)
    khz = item.offsets_hz / 1e3
    if len(item) >= 2:
        xr = (float(khz[0]), float(khz[-1]))
    elif len(item) == 1:
        xr = (float(khz[0]) - 1.0, float(khz[0]) + 1.0)
    else:
        xr = (-1.0, 1.0)
    series = [] if len(item) == 0 else [("mx", khz, item.mx), ("my", khz, item.my), ("mz", khz, item.mz)]
    return _svg("offset (kHz)", "magnetization", xr, (-1.0, 1.0), series)
