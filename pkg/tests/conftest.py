import numpy as np
import pytest

from pathreserve.chain import MarkovModel, two_state
from pathreserve.market import MarketModel
from pathreserve.paths import StoppedPath, TimeGrid


@pytest.fixture
def grid():
    return TimeGrid.uniform(1.0, 64)


@pytest.fixture
def bs():
    return MarketModel.black_scholes(0.05, 0.2, 1.0, 0.03)


@pytest.fixture
def ramp(grid):
    return StoppedPath.from_function(grid, lambda u: 1.0 + u)


@pytest.fixture
def single_state():
    return MarkovModel(1, {})


@pytest.fixture
def alive_dead():
    return two_state(0.02)


def lognormal_path(grid, seed, t=None, sigma=0.3):
    """Rough positive test path."""
    r = np.random.default_rng(seed)
    steps = np.diff(grid.nodes)
    logs = np.concatenate([[0.0], np.cumsum(sigma * np.sqrt(steps) * r.standard_normal(steps.size))])
    sp = StoppedPath(grid, grid.n_steps, np.exp(logs))
    return sp if t is None else sp.stop_at(t)


# acceptance lines collected by tests/test_acceptance.py and echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
