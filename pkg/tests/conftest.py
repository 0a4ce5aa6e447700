import pytest

from wgexciton.layered_medium import load_fixture
from wgexciton.mode_solver import solve_modes

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def fc_stack():
    return load_fixture("fc")


@pytest.fixture(scope="session")
def gi_stack():
    return load_fixture("gi")


@pytest.fixture(scope="session")
def fc_modes(fc_stack):
    return solve_modes(fc_stack)


@pytest.fixture(scope="session")
def gi_modes(gi_stack):
    return solve_modes(gi_stack)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
