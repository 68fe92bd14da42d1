"""Greedy feedback design of broadband and band-selective NMR pulses."""

from .bloch import (
    InvalidParameterError,
    Magnetization,
    PulseParameters,
    PulseSequence,
    flip_to_duration,
    propagate,
    propagate_states,
    propagator_matrix,
    rotate_step,
)
from .designer import (
    PRESETS,
    DesignReport,
    DesignState,
    DesignTask,
    Mode,
    Strategy,
    design,
    design_band_selective,
    design_excitation,
    design_pulse,
    feedback_phase,
    init_states,
    make_offset_grid,
    preset_task,
    reverse_with_pi,
    select_target,
)
from .profile import Profile, ProfileMetrics, amplitude_robustness_sweep, evaluation_grid, metrics, sweep

__version__ = "0.1.0"

__all__ = [
    "InvalidParameterError",
    "Magnetization",
    "PulseParameters",
    "PulseSequence",
    "flip_to_duration",
    "propagate",
    "propagate_states",
    "propagator_matrix",
    "rotate_step",
    "PRESETS",
    "DesignReport",
    "DesignState",
    "DesignTask",
    "Mode",
    "Strategy",
    "design",
    "design_band_selective",
    "design_excitation",
    "design_pulse",
    "feedback_phase",
    "init_states",
    "make_offset_grid",
    "preset_task",
    "reverse_with_pi",
    "select_target",
    "Profile",
    "ProfileMetrics",
    "amplitude_robustness_sweep",
    "evaluation_grid",
    "metrics",
    "sweep",
]
