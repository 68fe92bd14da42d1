"""Command-line driver: design, evaluate, reverse and export feedback pulses.

Physical quantities are given in kHz, ms and degrees on the command line.
Exit codes: 0 success, 1 usage or input error, 2 design did not converge.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pulseio
from .bloch import InvalidParameterError, PulseParameters
from .designer import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_STEPS,
    DEFAULT_N_OFFSETS,
    PRESETS,
    DesignTask,
    Mode,
    Strategy,
    design,
    reverse_with_pi,
)
from .profile import DEFAULT_GRID_POINTS, evaluation_grid, metrics, sweep

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2

_MODES = {"inversion": Mode.INVERSION, "excitation": Mode.EXCITATION, "band": Mode.BAND_SELECTIVE,
          "band_selective": Mode.BAND_SELECTIVE}
_START = {"north": (0.0, 0.0, 1.0), "y": (0.0, 1.0, 0.0), "south": (0.0, 0.0, -1.0)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="feedback-pulse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="run the feedback designer")
    d.add_argument("--preset", choices=sorted(PRESETS))
    d.add_argument("--mode", choices=sorted(_MODES))
    d.add_argument("--amplitude-khz", type=float)
    d.add_argument("--band-khz", type=float, help="half-width B of the design band")
    d.add_argument("--pass-khz", type=float, help="half-width C of the pass band (band mode)")
    d.add_argument("--flip-deg", type=float, help="flip angle per step")
    d.add_argument("--offsets", type=int, help=f"number of design offsets (default {DEFAULT_N_OFFSETS})")
    d.add_argument("--epsilon", type=float, help=f"stop once every z <= -(1 - epsilon) (default {DEFAULT_EPSILON})")
    d.add_argument("--max-steps", type=int, help=f"step cap (default {DEFAULT_MAX_STEPS})")
    d.add_argument("--strategy", choices=[s.value for s in Strategy])
    d.add_argument("--out", type=Path, help="pulse JSON path (default feedback_<mode>.json)")
    d.add_argument("--shape", type=Path, help="also write a JCAMP-DX shape file")
    d.add_argument("--reversed-out", type=Path,
                   help="also write the time-reversed, pi-shifted pulse (the excitation deliverable)")

    e = sub.add_parser("evaluate", help="sweep a pulse over an offset grid")
    e.add_argument("pulse", type=Path)
    e.add_argument("--from", dest="start", choices=sorted(_START), default="north")
    e.add_argument("--grid-points", type=int, default=DEFAULT_GRID_POINTS)
    e.add_argument("--grid-khz", type=float, help="grid half-width (default: the pulse's design band)")
    e.add_argument("--pass-khz", type=float, help="pass-band half-width for band metrics")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--csv", type=Path)
    e.add_argument("--svg", type=Path)

    r = sub.add_parser("reverse", help="time-reverse a pulse and add pi to every phase")
    r.add_argument("pulse", type=Path)
    r.add_argument("--out", type=Path, required=True)

    x = sub.add_parser("export", help="convert pulse JSON to a shape file or CSV")
    x.add_argument("pulse", type=Path)
    x.add_argument("--format", choices=["shape", "csv", "svg"], default="shape")
    x.add_argument("--out", type=Path, required=True)
    x.add_argument("--title")
    return parser


def _task_from_args(args) -> DesignTask:
    values = {}
    if args.preset:
        p = PRESETS[args.preset]
        values = dict(mode=p["mode"], amplitude_hz=p["amplitude_hz"], band_hz=p["band_hz"],
                      pass_hz=p.get("pass_hz"), flip_deg=p["flip_deg"])
    if args.mode:
        values["mode"] = _MODES[args.mode]
    if args.amplitude_khz is not None:
        values["amplitude_hz"] = args.amplitude_khz * 1e3
    if args.band_khz is not None:
        values["band_hz"] = args.band_khz * 1e3
    if args.pass_khz is not None:
        values["pass_hz"] = args.pass_khz * 1e3
    if args.flip_deg is not None:
        values["flip_deg"] = args.flip_deg

    missing = [flag for flag, key in [("--mode", "mode"), ("--amplitude-khz", "amplitude_hz"),
                                      ("--band-khz", "band_hz"), ("--flip-deg", "flip_deg")]
               if values.get(key) is None]
    if values.get("mode") is Mode.BAND_SELECTIVE and values.get("pass_hz") is None:
        missing.append("--pass-khz")
    if missing:
        raise UsageError("missing required option(s): " + ", ".join(missing))

    return DesignTask(
        mode=values["mode"],
        params=PulseParameters(values["amplitude_hz"], values["flip_deg"]),
        band_hz=values["band_hz"],
        pass_hz=values.get("pass_hz") if values["mode"] is Mode.BAND_SELECTIVE else None,
        n_offsets=DEFAULT_N_OFFSETS if args.offsets is None else args.offsets,
        epsilon=DEFAULT_EPSILON if args.epsilon is None else args.epsilon,
        max_steps=DEFAULT_MAX_STEPS if args.max_steps is None else args.max_steps,
        strategy=args.strategy or Strategy.WORST_OFFSET,
    )


def _flags(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}


def cmd_design(args) -> int:
    task = _task_from_args(args)
    report = design(task)
    seq = report.sequence
    seq.metadata["cli"] = _flags(args)
    out = args.out or Path(f"feedback_{task.mode.value}.json")
    pulseio.atomic_write(out, pulseio.write_pulse_json(report))
    if args.shape:
        pulseio.atomic_write(args.shape, pulseio.write_shape_file(seq))
    if args.reversed_out:
        pulseio.atomic_write(args.reversed_out, pulseio.write_pulse_json(reverse_with_pi(seq)))
    print(f"mode={task.mode.value} steps={report.steps} duration_ms={report.duration_s * 1e3:.4f} "
          f"converged={str(report.converged).lower()} worst_z={report.worst_z:.6f}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _load(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return pulseio.read_pulse_json(text)
    except (pulseio.PulseParseError, InvalidParameterError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_evaluate(args) -> int:
    seq = _load(args.pulse)
    if args.grid_points < 1:
        raise UsageError("--grid-points must be at least 1")
    band_hz = args.grid_khz * 1e3 if args.grid_khz is not None else seq.metadata.get("band_hz")
    if not band_hz:
        raise UsageError("--grid-khz is required when the pulse file has no band_hz")
    pass_hz = args.pass_khz * 1e3 if args.pass_khz is not None else seq.metadata.get("pass_hz")
    profile = sweep(seq, evaluation_grid(band_hz, args.grid_points), _START[args.start], workers=args.workers)
    covered = float(abs(profile.offsets_hz).max())
    m = metrics(profile, covered, pass_hz if pass_hz and pass_hz < covered else None) if covered > 0 else None
    if args.csv:
        pulseio.atomic_write(args.csv, pulseio.write_profile_csv(profile, m))
    if args.svg:
        pulseio.atomic_write(args.svg, pulseio.write_plot_svg(profile))
    if m is None:
        print("mx={:.6g} my={:.6g} mz={:.6g}".format(*profile.states()[0]))
        return EXIT_OK
    for key, value in m.as_dict().items():
        print(f"{key}={'' if value is None else f'{value:.6g}'}")
    return EXIT_OK


def cmd_reverse(args) -> int:
    seq = reverse_with_pi(_load(args.pulse))
    seq.metadata["source"] = str(args.pulse)
    pulseio.atomic_write(args.out, pulseio.write_pulse_json(seq))
    print(f"reversed {len(seq)} steps -> {args.out}")
    return EXIT_OK


def cmd_export(args) -> int:
    seq = _load(args.pulse)
    if args.format == "shape":
        text = pulseio.write_shape_file(seq, title=args.title)
    elif args.format == "csv":
        text = pulseio.write_phase_csv(seq)
    else:
        text = pulseio.write_plot_svg(seq)
    pulseio.atomic_write(args.out, text)
    print(f"exported {len(seq)} steps as {args.format} -> {args.out}")
    return EXIT_OK


_COMMANDS = {"design": cmd_design, "evaluate": cmd_evaluate, "reverse": cmd_reverse, "export": cmd_export}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, InvalidParameterError) as exc:
        print(f"feedback-pulse {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
