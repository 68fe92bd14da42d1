import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from feedback_pulse.designer import design, design_pulse, preset_task  # noqa: E402


@pytest.fixture(scope="session")
def inversion_report():
    return design_pulse(preset_task("paper-inversion"))


@pytest.fixture(scope="session")
def excitation_report():
    return design_pulse(preset_task("paper-excitation"))


@pytest.fixture(scope="session")
def band_report():
    return design_pulse(preset_task("paper-band"))


@pytest.fixture(scope="session")
def excitation_forward(excitation_report):
    return excitation_report.forward_sequence


@pytest.fixture(scope="session")
def small_excitation_task():
    # 8 offsets keep the loop under a second while exercising every code path
    return preset_task("paper-excitation", band_hz=4e3, n_offsets=8)


@pytest.fixture(scope="session")
def small_inversion_report():
    return design(preset_task("paper-inversion", band_hz=4e3, n_offsets=8))


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in sorted(results.items(), key=lambda kv: int(kv[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
