import numpy as np
import pytest

from cgdft import Grid, ModelSpec

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record and print one pass/fail line for an acceptance criterion."""
    store = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        print(line)
        store.append(line)
        return passed

    return record


@pytest.fixture(scope="session")
def grid():
    return Grid(1.0, 128)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(1.0, 16)


@pytest.fixture(scope="session")
def model1(grid):
    return ModelSpec(grid, 1, 1.0, 0.5)


@pytest.fixture(scope="session")
def model2(grid):
    return ModelSpec(grid, 2, 1.0, 0.5)


@pytest.fixture(scope="session")
def small2(small_grid):
    return ModelSpec(small_grid, 2, 1.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
