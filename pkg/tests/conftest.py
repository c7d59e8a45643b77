import pytest

from carleman.core import BoundaryData, Grid1D, InitialData

ALPHAS = (-1.0, -0.5, 0.0, 0.5, 1.0)
BETAS = ALPHAS

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def acceptance_line(request):
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""
    lines = request.config.stash[_LINES_KEY]

    def emit(label: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        print(line)
        lines.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def grid50():
    return Grid1D(50)


@pytest.fixture
def mixed_bc():
    return BoundaryData.constant(1.0, 2.0, 1.0)


def constant_init(grid, u=1.0, v=1.0):
    return InitialData.constant(grid, u, v)
