"""Rotating-frame spin-1/2 dynamics for constant-amplitude, phase-only pulses.

Each step of a pulse is an exact rotation about the effective field
``(A cos(theta), A sin(theta), nu)`` by ``2*pi*sqrt(A**2 + nu**2)*dt``
(right-handed). Relaxation is ignored.

Every offset is advanced by the same compiled step function with the same
operation order, so propagating one offset or many offsets at once gives
bitwise-identical results for a given offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

# Unit-norm tolerance accepted on input states.
NORM_TOL = 1e-6


class InvalidParameterError(ValueError):
    """Raised when a physical or design parameter is out of range."""


class Magnetization(NamedTuple):
    """Unit magnetization vector for one offset."""

    mx: float
    my: float
    mz: float

    @property
    def z(self) -> float:
        return self.mz

    @property
    def phase(self) -> float:
        """Transverse phase ``atan2(my, mx)`` in radians."""
        return math.atan2(self.my, self.mx)

    @property
    def transverse(self) -> float:
        return math.hypot(self.mx, self.my)

    def as_array(self) -> np.ndarray:
        return np.array([self.mx, self.my, self.mz], dtype=float)


NORTH = Magnetization(0.0, 0.0, 1.0)
SOUTH = Magnetization(0.0, 0.0, -1.0)
PLUS_Y = Magnetization(0.0, 1.0, 0.0)


def flip_to_duration(flip_deg: float, amplitude_hz: float) -> float:
    """Duration in seconds of a ``flip_deg`` rotation at RF amplitude ``amplitude_hz``."""
    if not flip_deg > 0 or not amplitude_hz > 0:
        raise InvalidParameterError(
            f"flip angle and amplitude must be positive, got {flip_deg!r} deg, {amplitude_hz!r} Hz"
        )
    return flip_deg / (360.0 * amplitude_hz)


@dataclass(frozen=True)
class PulseParameters:
    """RF amplitude and per-step flip angle; the dwell time follows from both."""

    amplitude_hz: float
    flip_per_step_deg: float

    def __post_init__(self) -> None:
        # validates both fields
        flip_to_duration(self.flip_per_step_deg, self.amplitude_hz)

    @property
    def dwell_s(self) -> float:
        return flip_to_duration(self.flip_per_step_deg, self.amplitude_hz)

    @classmethod
    def from_khz(cls, amplitude_khz: float, flip_deg: float) -> "PulseParameters":
        return cls(amplitude_hz=amplitude_khz * 1e3, flip_per_step_deg=flip_deg)


def normalize_phase(theta: float) -> float:
    """Wrap an angle in radians into ``[0, 2*pi)``."""
    wrapped = theta % TWO_PI
    # x % 2pi can round up to exactly 2pi for tiny negative x
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


@dataclass(frozen=True)
class PulseSequence:
    """Ordered RF phases (radians) played at constant amplitude and dwell."""

    params: PulseParameters
    phases_rad: np.ndarray
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        phases = np.array(self.phases_rad, dtype=float).reshape(-1)
        if phases.size and not (
            np.all(np.isfinite(phases)) and phases.min() >= 0.0 and phases.max() < TWO_PI
        ):
            raise InvalidParameterError("every phase must be finite and lie in [0, 2*pi)")
        phases.setflags(write=False)
        object.__setattr__(self, "phases_rad", phases)

    def __len__(self) -> int:
        return int(self.phases_rad.size)

    @property
    def duration_s(self) -> float:
        return len(self) * self.params.dwell_s

    @classmethod
    def from_phases(
        cls, params: PulseParameters, phases: Sequence[float], **metadata: Any
    ) -> "PulseSequence":
        """Build a sequence, wrapping arbitrary phases into ``[0, 2*pi)``."""
        wrapped = [normalize_phase(float(p)) for p in phases]
        return cls(params, np.asarray(wrapped, dtype=float), dict(metadata))


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------


def _offset_coefficients(amplitude_hz: float, dwell_s: float, offsets_hz) -> tuple[np.ndarray, ...]:
    """Per-offset (transverse axis weight, z axis weight, cos(beta), sin(beta)).

    Computed with ``math`` scalars, one offset at a time, so the coefficients of
    an offset never depend on which batch it is evaluated in.
    """
    nt, nz, cb, sb = [], [], [], []
    for nu in offsets_hz:
        nu = float(nu)
        omega = math.hypot(amplitude_hz, nu)
        if omega == 0.0:
            nt.append(0.0)
            nz.append(1.0)
            cb.append(1.0)
            sb.append(0.0)
            continue
        beta = TWO_PI * omega * dwell_s
        nt.append(amplitude_hz / omega)
        nz.append(nu / omega)
        cb.append(math.cos(beta))
        sb.append(math.sin(beta))
    return tuple(np.array(v, dtype=float) for v in (nt, nz, cb, sb))


@njit(cache=True)
def _apply_step(theta, nt, nz, cb, sb, states):
    """Rotate every row of ``states`` in place by one step of RF phase ``theta``."""
    ct = math.cos(theta)
    st = math.sin(theta)
    for k in range(states.shape[0]):
        mx = states[k, 0]
        my = states[k, 1]
        mz = states[k, 2]
        nx = nt[k] * ct
        ny = nt[k] * st
        n_z = nz[k]
        c = cb[k]
        s = sb[k]
        f = (1.0 - c) * (nx * mx + ny * my + n_z * mz)
        # Rodrigues: m c + (n x m) s + n (n.m)(1 - c)
        states[k, 0] = mx * c + (ny * mz - n_z * my) * s + nx * f
        states[k, 1] = my * c + (n_z * mx - nx * mz) * s + ny * f
        states[k, 2] = mz * c + (nx * my - ny * mx) * s + n_z * f


@njit(cache=True)
def _apply_sequence(phases, nt, nz, cb, sb, states):
    for i in range(phases.shape[0]):
        _apply_step(phases[i], nt, nz, cb, sb, states)


def _check_unit(m: np.ndarray) -> None:
    norms = np.sqrt(np.sum(m * m, axis=-1))
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        raise InvalidParameterError("magnetization must be a unit vector")


def propagate_states(
    phases_rad,
    amplitude_hz: float,
    dwell_s: float,
    offsets_hz,
    m0,
) -> np.ndarray:
    """Propagate initial states through a phase list at many offsets.

    Parameters
    ----------
    phases_rad : array_like
        RF phase of each step, first step first.
    amplitude_hz, dwell_s : float
        RF amplitude and step duration.
    offsets_hz : array_like
        Offsets to evaluate, shape ``(n,)``.
    m0 : array_like
        Either one state of shape ``(3,)`` shared by all offsets, or one state
        per offset of shape ``(n, 3)``.

    Returns
    -------
    np.ndarray
        Final states, shape ``(n, 3)``.
    """
    offsets = np.asarray(offsets_hz, dtype=float).reshape(-1)
    m0 = np.asarray(m0, dtype=float)
    if m0.ndim == 1:
        m0 = np.broadcast_to(m0, (offsets.size, 3))
    if m0.shape != (offsets.size, 3):
        raise InvalidParameterError(f"initial states of shape {m0.shape} do not match {offsets.size} offsets")
    _check_unit(m0)
    states = np.ascontiguousarray(m0, dtype=float).copy()
    phases = np.ascontiguousarray(phases_rad, dtype=float).reshape(-1)
    _apply_sequence(phases, *_offset_coefficients(amplitude_hz, dwell_s, offsets), states)
    return states


def rotate_step(m, params: PulseParameters, phase_rad: float, offset_hz: float) -> Magnetization:
    """Apply a single RF step of phase ``phase_rad`` at ``offset_hz``."""
    out = propagate_states([phase_rad], params.amplitude_hz, params.dwell_s, [offset_hz], np.asarray(m, float))
    return Magnetization(*out[0].tolist())


def propagate(seq: PulseSequence, offset_hz: float, m0=NORTH) -> Magnetization:
    """Final magnetization after playing ``seq`` at one offset."""
    out = propagate_states(seq.phases_rad, seq.params.amplitude_hz, seq.params.dwell_s, [offset_hz], m0)
    return Magnetization(*out[0].tolist())


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Right-handed rotation matrix about unit ``axis`` by ``angle`` radians."""
    n = np.asarray(axis, dtype=float)
    cross = np.array([[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]])
    return math.cos(angle) * np.eye(3) + math.sin(angle) * cross + (1.0 - math.cos(angle)) * np.outer(n, n)


def propagator_matrix(seq: PulseSequence, offset_hz: float) -> np.ndarray:
    """3x3 rotation matrix of the whole sequence at ``offset_hz``.

    Built by multiplying per-step Rodrigues matrices, independently of the
    vector kernel used by :func:`propagate`.
    """
    a = seq.params.amplitude_hz
    omega = math.hypot(a, offset_hz)
    beta = TWO_PI * omega * seq.params.dwell_s
    u = np.eye(3)
    for theta in seq.phases_rad.tolist():
        axis = np.array([a * math.cos(theta), a * math.sin(theta), offset_hz]) / omega
        u = rotation_matrix(axis, beta) @ u
    return u
