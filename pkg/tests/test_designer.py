import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feedback_pulse.bloch import (
    InvalidParameterError,
    PulseParameters,
    PulseSequence,
    propagate,
    propagate_states,
    propagator_matrix,
    rotate_step,
)
from feedback_pulse.designer import (
    DesignState,
    DesignTask,
    Mode,
    Strategy,
    design,
    design_band_selective,
    design_excitation,
    feedback_phase,
    init_states,
    make_offset_grid,
    preset_task,
    reverse_with_pi,
    select_target,
)

from oracles import great_circle_steps

TWO_PI = 2 * math.pi


class TestOffsetGrid:
    def test_four_points(self):
        np.testing.assert_allclose(make_offset_grid(20000, 4), [-20000, -20000 / 3, 20000 / 3, 20000])

    def test_forty_points(self):
        g = make_offset_grid(20000, 40)
        assert g.size == 40 and g[0] == -20000 and g[-1] == 20000
        assert not np.any(g == 0)
        assert np.all(np.diff(g) > 0)
        np.testing.assert_array_equal(g, -g[::-1])

    def test_two_points(self):
        np.testing.assert_array_equal(make_offset_grid(5000, 2), [-5000, 5000])

    @pytest.mark.parametrize("n", [0, 1, 3, 41])
    def test_rejects_odd_or_tiny(self, n):
        with pytest.raises(InvalidParameterError):
            make_offset_grid(1000, n)


class TestInitStates:
    def test_inversion(self):
        task = preset_task("paper-inversion")
        s = init_states(task, task.grid())
        np.testing.assert_array_equal(s, np.tile([0, 0, 1.0], (40, 1)))

    def test_excitation(self):
        task = preset_task("paper-excitation")
        np.testing.assert_array_equal(init_states(task, task.grid()), np.tile([0, 1.0, 0], (40, 1)))

    def test_band_selective(self):
        task = DesignTask(Mode.BAND_SELECTIVE, PulseParameters(5e3, 0.29), 5000, pass_hz=2000)
        s = init_states(task, [-5000, -1000, 1000, 5000])
        np.testing.assert_array_equal(s, [[0, 0, -1], [0, 1, 0], [0, 1, 0], [0, 0, -1]])


class TestSelectTarget:
    def _state(self, z, step_count=0):
        z = np.asarray(z, float)
        states = np.column_stack([np.sqrt(1 - z**2), np.zeros_like(z), z])
        return DesignState(np.arange(z.size, dtype=float), states, step_count)

    def test_argmax_first_index(self):
        assert select_target(self._state([-0.5, 0.9, 0.9])) == 1

    def test_all_equal(self):
        assert select_target(self._state([0.2, 0.2, 0.2])) == 0

    def test_linear_sweep(self):
        assert select_target(self._state([0, 0, 0, 0], step_count=5), Strategy.LINEAR_SWEEP) == 1


class TestFeedbackPhase:
    def test_plus_y(self):
        assert feedback_phase((0, 1, 0)) == pytest.approx(math.pi)

    def test_plus_x(self):
        assert feedback_phase((1, 0, 0)) == pytest.approx(math.pi / 2)

    def test_pole_convention(self):
        assert feedback_phase((0, 0, 1)) == math.pi / 2
        assert feedback_phase((1e-13, -1e-13, -1)) == math.pi / 2

    def test_range(self):
        assert 0 <= feedback_phase((0, -1, 0)) < TWO_PI
        assert feedback_phase((0, -1, 0)) == 0.0


@settings(max_examples=200, deadline=None)
@given(z=st.floats(-0.999, 0.999), phi=st.floats(-math.pi, math.pi))
def test_targeted_on_resonance_step_never_raises_z(z, phi):
    r = math.sqrt(1 - z * z)
    m = (r * math.cos(phi), r * math.sin(phi), z)
    after = rotate_step(m, PulseParameters(1e4, 0.5), feedback_phase(m), 0.0)
    assert after.mz <= z + 1e-15
    # step moves along the great circle through the pole: z = cos(angle from north + flip)
    assert after.mz == pytest.approx(math.cos(math.acos(z) + math.radians(0.5)), abs=1e-12)


class TestDesign:
    def test_single_on_resonance_offset(self):
        task = DesignTask(Mode.INVERSION, PulseParameters(1e4, 0.5), band_hz=1.0, epsilon=0.01, offsets_hz=(0.0,))
        report = design(task)
        assert great_circle_steps(0.5, 0.01) == 344
        assert report.converged
        assert report.steps == 344
        assert report.duration_s == 344 * task.params.dwell_s
        assert report.final_states[0, 2] <= -0.99

    def test_non_convergence_is_reported(self):
        report = design(preset_task("paper-inversion", max_steps=10))
        assert not report.converged and report.steps == 10

    def test_final_states_match_sweep(self, small_inversion_report):
        r = small_inversion_report
        p = r.sequence.params
        again = propagate_states(r.sequence.phases_rad, p.amplitude_hz, p.dwell_s, r.offsets_hz, [0, 0, 1.0])
        np.testing.assert_allclose(again, r.final_states, atol=1e-9)

    def test_converged_report_invariants(self, small_inversion_report):
        r = small_inversion_report
        assert r.converged and np.all(r.final_states[:, 2] <= -0.99)
        assert r.duration_s == r.steps * r.sequence.params.dwell_s

    def test_deterministic(self, small_excitation_task):
        a = design(small_excitation_task).sequence.phases_rad
        b = design(small_excitation_task).sequence.phases_rad
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("kwargs", [
        dict(band_hz=0),
        dict(n_offsets=3),
        dict(epsilon=0),
        dict(epsilon=1),
        dict(max_steps=0),
    ])
    def test_invalid_task(self, kwargs):
        with pytest.raises(InvalidParameterError):
            preset_task("paper-inversion", **kwargs)

    def test_band_needs_valid_pass(self):
        with pytest.raises(InvalidParameterError):
            preset_task("paper-band", pass_hz=6e3)
        with pytest.raises(InvalidParameterError):
            DesignTask(Mode.BAND_SELECTIVE, PulseParameters(5e3, 0.29), 5000)

    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_loop_matches_manual_replay(self, strategy):
        task = preset_task("paper-excitation", band_hz=3e3, n_offsets=4, max_steps=25, strategy=strategy)
        report = design(task)
        state = DesignState(task.grid(), init_states(task, task.grid()))
        for k in range(report.steps):
            j = select_target(state, strategy)
            theta = feedback_phase(state.states[j])
            assert report.sequence.phases_rad[k] == theta
            state.states = np.array([rotate_step(m, task.params, theta, nu)
                                     for m, nu in zip(state.states, state.offsets_hz)])
            state.step_count += 1


class TestReverse:
    def test_single(self):
        seq = reverse_with_pi(PulseSequence(PulseParameters(1e4, 1.0), [0.0]))
        assert seq.phases_rad.tolist() == [math.pi]

    def test_three(self):
        seq = reverse_with_pi(PulseSequence(PulseParameters(1e4, 1.0), [0.0, math.pi / 2, math.pi]))
        np.testing.assert_allclose(seq.phases_rad, [0.0, 1.5 * math.pi, math.pi], atol=1e-15)
        assert seq.params == PulseParameters(1e4, 1.0)
        assert seq.metadata["history"] == ["reverse_with_pi"]

    def test_involution(self):
        rng = np.random.default_rng(2)
        seq = PulseSequence(PulseParameters(1e4, 0.57), rng.uniform(0, TWO_PI, 1000))
        twice = reverse_with_pi(reverse_with_pi(seq))
        diff = np.angle(np.exp(1j * (twice.phases_rad - seq.phases_rad)))
        assert np.max(np.abs(diff)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(
    phases=st.lists(st.floats(0, TWO_PI, exclude_max=True), min_size=0, max_size=60),
    nu=st.floats(-2e4, 2e4),
    flip=st.floats(0.1, 20),
)
def test_reversal_identity(phases, nu, flip):
    seq = PulseSequence(PulseParameters(1e4, flip), phases)
    u = propagator_matrix(reverse_with_pi(seq), nu) @ propagator_matrix(seq, -nu)
    np.testing.assert_allclose(u, np.eye(3), atol=1e-9)


class TestExcitation:
    def test_reversed_pulse_excites_design_offsets(self, small_excitation_task):
        report = design_excitation(small_excitation_task)
        assert report.converged
        assert report.forward_sequence is not None
        seq = report.sequence
        # U_rev(nu) = U(-nu)^-1 and U(-nu) y = final(-nu)  =>  U_rev(nu) final(-nu) = y
        finals = report.final_states
        for k, nu in enumerate(report.offsets_hz):
            np.testing.assert_allclose(propagate(seq, nu, finals[-1 - k]), (0, 1, 0), atol=1e-9)
        out = propagate_states(seq.phases_rad, seq.params.amplitude_hz, seq.params.dwell_s,
                               report.offsets_hz, [0, 0, 1.0])
        # final(-nu) within acos(0.99) of -z  =>  result within the same angle of -y
        tol = math.sqrt(1 - 0.99**2)
        assert np.all(np.abs(out[:, 2]) <= tol)
        assert np.all(np.hypot(out[:, 0], out[:, 1]) >= 0.99)
        assert np.all(np.abs(out[:, 0]) <= tol) and np.all(out[:, 1] <= -0.99)

    def test_two_offset_smoke(self):
        task = preset_task("paper-excitation", band_hz=3e3, n_offsets=2)
        report = design_excitation(task)
        assert report.converged
        out = propagate_states(report.sequence.phases_rad, 1e4, task.params.dwell_s, [-3e3, 3e3], [0, 0, 1.0])
        assert np.all(np.hypot(out[:, 0], out[:, 1]) >= 0.99)

    def test_mode_mismatch(self):
        with pytest.raises(InvalidParameterError):
            design_excitation(preset_task("paper-inversion"))


def test_band_stop_offsets_stay_north():
    task = preset_task("paper-band", band_hz=5e3, pass_hz=2e3, n_offsets=6, epsilon=0.001)
    report = design_band_selective(task)
    assert report.converged
    seq = report.sequence
    stop = np.abs(report.offsets_hz) > 2e3
    out = propagate_states(seq.phases_rad, seq.params.amplitude_hz, seq.params.dwell_s,
                           report.offsets_hz[stop], [0, 0, 1.0])
    # forward -z -> within acos(0.999) of -z  =>  reversed +z stays within sqrt(2*0.001) < 0.05
    assert np.all(np.linalg.norm(out - [0, 0, 1.0], axis=1) <= 0.05)


@pytest.mark.slow
class TestPaperPresets:
    def test_inversion_preset(self, inversion_report):
        r = inversion_report
        assert r.converged
        assert 1.5e-3 <= r.duration_s <= 6e-3

    def test_excitation_preset(self, excitation_report):
        r = excitation_report
        assert r.converged
        assert 1.0e-3 <= r.duration_s <= 4e-3

    def test_band_preset(self, band_report):
        r = band_report
        if not r.converged:
            pytest.fail(f"no convergence in {r.steps} steps, worst z {r.worst_z:.4f}")
        assert 3.35e-3 <= r.duration_s <= 13.4e-3
