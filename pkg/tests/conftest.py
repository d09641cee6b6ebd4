import numpy as np
import pytest

from memoplate.modes import Domain, Params, build_phase_space, dirichlet_eigenvalues

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # acceptance verdicts stay visible even though pytest captures stdout
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def interval_modes():
    return dirichlet_eigenvalues(Domain("interval", (np.pi,)), 4)


@pytest.fixture(scope="session")
def small_space(interval_modes):
    # both memories active, thermal coupling on, coarse grid for speed
    return build_phase_space(interval_modes, Params(0.5, 0.25, 0.5), grid_size=80)
