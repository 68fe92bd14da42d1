"""Greedy feedback design of inversion, excitation and band-selective pulses.

All design offsets are simulated together. At every step the offset whose
magnetization is furthest from the south pole is picked, the RF phase is set
a quarter turn ahead of that offset's transverse phase, and one small-flip
step is applied to every offset. The loop ends once every offset sits within
``epsilon`` of the south pole.

Excitation and band-selective pulses are designed "backwards": the offsets
start on +y (and, for the stop band, on -z), are driven to -z, and the
resulting phase list is time-reversed with every phase shifted by pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

import numpy as np
from numba import njit

from .bloch import (
    InvalidParameterError,
    PulseParameters,
    PulseSequence,
    TWO_PI,
    _apply_step,
    _offset_coefficients,
    normalize_phase,
)

# Transverse magnitude below which the phase of a state is taken as 0.
POLE_TOL = 1e-12


class Mode(str, Enum):
    INVERSION = "inversion"
    EXCITATION = "excitation"
    BAND_SELECTIVE = "band_selective"


class Strategy(str, Enum):
    WORST_OFFSET = "worst_offset"
    LINEAR_SWEEP = "linear_sweep"  # experimental


DEFAULT_EPSILON = 0.01
DEFAULT_MAX_STEPS = 200_000
DEFAULT_N_OFFSETS = 40


def symmetric_grid(half_width_hz: float, n: int) -> np.ndarray:
    """Uniform endpoint-inclusive grid over ``[-half_width, half_width]``.

    The negative half is the exact mirror of the positive half, so
    ``grid[k] == -grid[n - 1 - k]`` holds bitwise. Odd ``n`` includes 0.
    """
    if n < 1:
        raise InvalidParameterError(f"grid needs at least one point, got {n}")
    if n == 1:
        return np.zeros(1)
    if not half_width_hz > 0:
        raise InvalidParameterError(f"band half-width must be positive, got {half_width_hz!r}")
    full = np.linspace(-half_width_hz, half_width_hz, n)
    upper = full[n // 2:] if n % 2 == 0 else full[n // 2 + 1:]
    upper = np.abs(upper)
    upper[-1] = half_width_hz
    middle = [0.0] if n % 2 else []
    return np.concatenate([-upper[::-1], middle, upper])


def make_offset_grid(band_hz: float, n_offsets: int) -> np.ndarray:
    """Design grid: ``n_offsets`` (even) points spanning ``[-band_hz, band_hz]``."""
    if n_offsets < 2 or n_offsets % 2:
        raise InvalidParameterError(f"n_offsets must be even and >= 2, got {n_offsets}")
    return symmetric_grid(band_hz, n_offsets)


@dataclass(frozen=True)
class DesignTask:
    """Everything needed to reproduce one design run.

    ``offsets_hz`` overrides the generated grid; it is meant for small
    diagnostic tasks such as a single on-resonance offset.
    """

    mode: Mode
    params: PulseParameters
    band_hz: float
    pass_hz: Optional[float] = None
    n_offsets: int = DEFAULT_N_OFFSETS
    epsilon: float = DEFAULT_EPSILON
    max_steps: int = DEFAULT_MAX_STEPS
    strategy: Strategy = Strategy.WORST_OFFSET
    offsets_hz: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.offsets_hz is not None:
            object.__setattr__(self, "offsets_hz", tuple(float(v) for v in self.offsets_hz))
        self.validate()

    def validate(self) -> None:
        if not self.band_hz > 0:
            raise InvalidParameterError(f"band_hz must be positive, got {self.band_hz!r}")
        if self.mode is Mode.BAND_SELECTIVE:
            if self.pass_hz is None or not 0 < self.pass_hz < self.band_hz:
                raise InvalidParameterError("band_selective needs 0 < pass_hz < band_hz")
        if not 0 < self.epsilon < 1:
            raise InvalidParameterError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.max_steps < 1:
            raise InvalidParameterError(f"max_steps must be >= 1, got {self.max_steps!r}")
        if self.offsets_hz is None:
            if self.n_offsets < 2 or self.n_offsets % 2:
                raise InvalidParameterError(f"n_offsets must be even and >= 2, got {self.n_offsets}")
        else:
            grid = np.asarray(self.offsets_hz)
            if grid.size == 0 or np.any(np.diff(grid) <= 0) or not np.all(np.isfinite(grid)):
                raise InvalidParameterError("explicit offsets must be finite and strictly increasing")

    def grid(self) -> np.ndarray:
        if self.offsets_hz is not None:
            return np.array(self.offsets_hz, dtype=float)
        return make_offset_grid(self.band_hz, self.n_offsets)

    def describe(self) -> dict[str, Any]:
        out = {
            "mode": self.mode.value,
            "band_hz": self.band_hz,
            "pass_hz": self.pass_hz,
            "n_offsets": len(self.grid()),
            "epsilon": self.epsilon,
            "max_steps": self.max_steps,
            "strategy": self.strategy.value,
        }
        if self.offsets_hz is not None:
            out["offsets_hz"] = list(self.offsets_hz)
        return out


@dataclass
class DesignState:
    """Magnetization of every design offset during a run."""

    offsets_hz: np.ndarray
    states: np.ndarray  # (n, 3)
    step_count: int = 0

    @property
    def z(self) -> np.ndarray:
        return self.states[:, 2]


@dataclass(frozen=True)
class DesignReport:
    sequence: PulseSequence
    converged: bool
    final_states: np.ndarray
    steps: int
    duration_s: float
    offsets_hz: np.ndarray
    forward_sequence: Optional[PulseSequence] = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def worst_z(self) -> float:
        return float(self.final_states[:, 2].max())


def init_states(task: DesignTask, offsets) -> np.ndarray:
    """Starting magnetization of each design offset, shape ``(n, 3)``."""
    offsets = np.asarray(offsets, dtype=float)
    states = np.zeros((offsets.size, 3))
    if task.mode is Mode.INVERSION:
        states[:, 2] = 1.0
    elif task.mode is Mode.EXCITATION:
        states[:, 1] = 1.0
    else:
        passband = np.abs(offsets) <= task.pass_hz
        states[passband, 1] = 1.0
        states[~passband, 2] = -1.0
    return states


def select_target(state: DesignState, strategy: Strategy = Strategy.WORST_OFFSET) -> int:
    """Index of the offset to steer next.

    ``worst_offset`` picks the largest z (first index on ties);
    ``linear_sweep`` walks the grid cyclically in ascending order.
    """
    if Strategy(strategy) is Strategy.LINEAR_SWEEP:
        return state.step_count % len(state.offsets_hz)
    return int(np.argmax(state.z))


def feedback_phase(m) -> float:
    """RF phase a quarter turn ahead of the transverse phase of ``m``.

    At the poles the transverse phase is undefined and taken as 0.
    """
    mx, my = float(m[0]), float(m[1])
    phi = math.atan2(my, mx) if math.hypot(mx, my) >= POLE_TOL else 0.0
    return normalize_phase(phi + math.pi / 2)


@njit(cache=True)
def _run_steps(states, nt, nz, cb, sb, threshold, linear, start, max_steps, out):
    """Advance the loop until convergence, ``max_steps`` or a full ``out`` buffer.

    Mirrors :func:`select_target` and :func:`feedback_phase`. Returns the
    number of phases written to ``out`` and whether the run converged.
    """
    n = states.shape[0]
    written = 0
    while True:
        j = 0
        for k in range(1, n):
            if states[k, 2] > states[j, 2]:
                j = k
        if states[j, 2] <= threshold:
            return written, True
        if start + written >= max_steps or written >= out.shape[0]:
            return written, False
        if linear:
            j = (start + written) % n
        mx = states[j, 0]
        my = states[j, 1]
        phi = math.atan2(my, mx) if math.hypot(mx, my) >= POLE_TOL else 0.0
        theta = (phi + math.pi / 2) % TWO_PI
        if theta >= TWO_PI:
            theta = 0.0
        _apply_step(theta, nt, nz, cb, sb, states)
        out[written] = theta
        written += 1


def _feedback_loop(task: DesignTask, offsets: np.ndarray, states: np.ndarray, chunk: int = 65536):
    params = task.params
    coeffs = _offset_coefficients(params.amplitude_hz, params.dwell_s, offsets)
    states = np.ascontiguousarray(states, dtype=float).copy()
    threshold = -(1.0 - task.epsilon)
    linear = task.strategy is Strategy.LINEAR_SWEEP
    chunks: list[np.ndarray] = []
    done = 0
    while True:
        buf = np.empty(min(chunk, task.max_steps - done) or 1)
        written, converged = _run_steps(states, *coeffs, threshold, linear, done, task.max_steps, buf)
        chunks.append(buf[:written])
        done += written
        if converged or done >= task.max_steps:
            break
    phases = np.concatenate(chunks)
    return phases, states, bool(converged)


def design(task: DesignTask) -> DesignReport:
    """Run the feedback loop for ``task`` and return the forward phase list.

    For excitation and band-selective tasks the returned sequence is the
    forward (to-south-pole) design; use :func:`design_excitation` or
    :func:`design_band_selective` for the deliverable pulse.
    """
    task.validate()
    offsets = task.grid()
    states = init_states(task, offsets)
    phases, final, converged = _feedback_loop(task, offsets, states)
    meta = task.describe()
    meta["transform"] = "forward"
    meta["converged"] = converged
    seq = PulseSequence(task.params, np.asarray(phases, dtype=float), meta)
    return DesignReport(
        sequence=seq,
        converged=converged,
        final_states=final,
        steps=len(phases),
        duration_s=seq.duration_s,
        offsets_hz=offsets,
        metadata=dict(meta),
    )


def reverse_with_pi(seq: PulseSequence) -> PulseSequence:
    """Play ``seq`` backwards with every phase advanced by pi.

    At offset ``nu`` the result is the inverse of the original propagator at
    ``-nu``.
    """
    phases = [normalize_phase(p + math.pi) for p in seq.phases_rad[::-1].tolist()]
    meta = dict(seq.metadata)
    history = list(meta.get("history", []))
    history.append("reverse_with_pi")
    meta["history"] = history
    previous = meta.get("transform", "forward")
    meta["transform"] = "reversed_with_pi" if previous != "reversed_with_pi" else "forward"
    return PulseSequence(seq.params, np.asarray(phases, dtype=float), meta)


def _design_reversed(task: DesignTask, mode: Mode) -> DesignReport:
    if task.mode is not mode:
        raise InvalidParameterError(f"expected a {mode.value} task, got {task.mode.value}")
    forward = design(task)
    deliverable = reverse_with_pi(forward.sequence)
    return replace(forward, sequence=deliverable, forward_sequence=forward.sequence)


def design_excitation(task: DesignTask) -> DesignReport:
    """Broadband excitation pulse (north pole to the transverse plane)."""
    return _design_reversed(task, Mode.EXCITATION)


def design_band_selective(task: DesignTask) -> DesignReport:
    """Band-selective excitation pulse; the stop band is left near +z."""
    return _design_reversed(task, Mode.BAND_SELECTIVE)


def design_pulse(task: DesignTask) -> DesignReport:
    """Deliverable pulse for any mode."""
    if task.mode is Mode.INVERSION:
        return design(task)
    return _design_reversed(task, task.mode)


# Simulation parameter sets reported for the three pulse types.
PRESETS: dict[str, dict[str, Any]] = {
    "paper-inversion": dict(mode=Mode.INVERSION, amplitude_hz=10e3, band_hz=20e3, flip_deg=0.57),
    "paper-excitation": dict(mode=Mode.EXCITATION, amplitude_hz=10e3, band_hz=20e3, flip_deg=0.57),
    "paper-band": dict(mode=Mode.BAND_SELECTIVE, amplitude_hz=5e3, band_hz=5e3, pass_hz=2e3, flip_deg=0.29),
}


def preset_task(name: str, **overrides: Any) -> DesignTask:
    try:
        p = dict(PRESETS[name])
    except KeyError:
        raise InvalidParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    p.update(overrides)
    params = PulseParameters(p.pop("amplitude_hz"), p.pop("flip_deg"))
    return DesignTask(params=params, **p)
