"""Offset-profile evaluation of a pulse and the summary metrics used to grade it."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .bloch import (
    InvalidParameterError,
    Magnetization,
    PulseSequence,
    propagate_states,
)
from .designer import symmetric_grid

DEFAULT_GRID_POINTS = 401
# Transverse magnitude below which a point carries no usable phase.
PHASE_MIN_TRANSVERSE = 0.1
# Slack when checking that a metric band is covered by the grid.
_COVER_TOL = 1e-9


@dataclass(frozen=True)
class Profile:
    offsets_hz: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    mz: np.ndarray
    initial_state: Magnetization

    def __post_init__(self) -> None:
        for name in ("offsets_hz", "mx", "my", "mz"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.offsets_hz.size == self.mx.size == self.my.size == self.mz.size):
            raise InvalidParameterError("profile arrays must have equal length")
        if np.any(np.diff(self.offsets_hz) <= 0):
            raise InvalidParameterError("profile offsets must be strictly increasing")
        object.__setattr__(self, "initial_state", Magnetization(*map(float, self.initial_state)))

    def __len__(self) -> int:
        return int(self.offsets_hz.size)

    @property
    def transverse(self) -> np.ndarray:
        return np.hypot(self.mx, self.my)

    @property
    def phase_rad(self) -> np.ndarray:
        return np.arctan2(self.my, self.mx)

    def states(self) -> np.ndarray:
        return np.stack([self.mx, self.my, self.mz], axis=1)


@dataclass(frozen=True)
class ProfileMetrics:
    worst_inversion: float
    min_transverse: float
    phase_spread_deg: float
    stopband_leakage: Optional[float] = None
    passband_ripple: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def evaluation_grid(band_hz: float, n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform, endpoint-inclusive, exactly mirrored grid over ``[-band_hz, band_hz]``."""
    return symmetric_grid(band_hz, n_points)


def _sweep(phases, amplitude_hz, dwell_s, grid, m0, workers) -> np.ndarray:
    if workers is None or workers <= 1 or grid.size < 2:
        return propagate_states(phases, amplitude_hz, dwell_s, grid, m0)
    chunks = np.array_split(np.arange(grid.size), min(workers, grid.size))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda idx: propagate_states(phases, amplitude_hz, dwell_s, grid[idx], m0), chunks)
        return np.concatenate(list(parts), axis=0)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InvalidParameterError("evaluation grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("evaluation grid must be strictly increasing")
    return grid


def sweep(seq: PulseSequence, grid, m0=(0.0, 0.0, 1.0), workers: Optional[int] = None) -> Profile:
    """Final magnetization of ``seq`` at every offset of ``grid``, starting from ``m0``.

    ``workers > 1`` splits the grid across threads; the result is bitwise
    identical to the serial sweep because offsets never interact.
    """
    grid = _check_grid(grid)
    m0 = Magnetization(*map(float, m0))
    out = _sweep(seq.phases_rad, seq.params.amplitude_hz, seq.params.dwell_s, grid, m0.as_array(), workers)
    return Profile(grid, out[:, 0], out[:, 1], out[:, 2], m0)


def amplitude_robustness_sweep(
    seq: PulseSequence, grid, m0=(0.0, 0.0, 1.0), scales: Iterable[float] = (0.95, 1.0, 1.05),
    workers: Optional[int] = None,
) -> list[Profile]:
    """Profiles with the RF amplitude scaled by each factor and the dwell left unchanged."""
    scales = [float(s) for s in scales]
    if any(not s > 0 for s in scales):
        raise InvalidParameterError(f"amplitude scales must be positive, got {scales}")
    grid = _check_grid(grid)
    m0 = Magnetization(*map(float, m0))
    profiles = []
    for s in scales:
        if s == 1.0:
            profiles.append(sweep(seq, grid, m0, workers))
            continue
        out = _sweep(seq.phases_rad, seq.params.amplitude_hz * s, seq.params.dwell_s, grid, m0.as_array(), workers)
        profiles.append(Profile(grid, out[:, 0], out[:, 1], out[:, 2], m0))
    return profiles


def _phase_spread_deg(phase: np.ndarray, transverse: np.ndarray) -> float:
    keep = transverse > PHASE_MIN_TRANSVERSE
    if keep.sum() < 2:
        return 0.0
    unwrapped = np.unwrap(phase[keep])
    return float(np.degrees(unwrapped.max() - unwrapped.min()))


def metrics(profile: Profile, band_hz: float, pass_hz: Optional[float] = None) -> ProfileMetrics:
    """Quality numbers over ``|offset| <= band_hz``.

    Inversion and transverse figures cover the whole band. When ``pass_hz``
    is given, ``|offset| <= pass_hz`` is the pass band and the rest of the band
    the stop band; phase spread is then taken over the pass band only.
    """
    if len(profile) == 0:
        raise InvalidParameterError("cannot compute metrics of an empty profile")
    lo, hi = profile.offsets_hz[0], profile.offsets_hz[-1]
    if not band_hz > 0 or -band_hz < lo - _COVER_TOL * max(1.0, band_hz) or band_hz > hi + _COVER_TOL * max(1.0, band_hz):
        raise InvalidParameterError(f"band +/-{band_hz} Hz is not covered by grid [{lo}, {hi}]")
    if pass_hz is not None and not 0 < pass_hz < band_hz:
        raise InvalidParameterError("pass band must satisfy 0 < pass_hz < band_hz")

    nu = profile.offsets_hz
    tr = profile.transverse
    in_band = np.abs(nu) <= band_hz * (1 + _COVER_TOL)
    stop = passband = None
    phase_region = in_band
    if pass_hz is not None:
        passband = np.abs(nu) <= pass_hz
        stop = in_band & ~passband
        phase_region = passband

    ripple = leakage = None
    if passband is not None and passband.any():
        ripple = float(tr[passband].max() - tr[passband].min())
    if stop is not None and stop.any():
        leakage = float(tr[stop].max())

    return ProfileMetrics(
        worst_inversion=float(profile.mz[in_band].max()),
        min_transverse=float(tr[in_band].min()),
        phase_spread_deg=_phase_spread_deg(profile.phase_rad[phase_region], tr[phase_region]),
        stopband_leakage=leakage,
        passband_ripple=ripple,
    )
