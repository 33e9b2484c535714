import numpy as np
import pytest

from gibbsroute.geometry import Geometry
from gibbsroute.limit import LimitKernel
from gibbsroute.pathloss import IdealHertz, ShiftedPower


@pytest.fixture(scope="session")
def line_setup():
    """d = 1, W = [-5, 5], Hertz loss with alpha = 4, kmax = 2."""
    geom = Geometry(d=1, radius=5.0, gamma=1.0, kmax=2)
    return geom, IdealHertz(4)


@pytest.fixture(scope="session")
def disk_setup():
    """d = 2, W = B_7, shifted power loss (1 + r)^-4, kmax = 2."""
    geom = Geometry(d=2, radius=7.0, gamma=1.0, kmax=2)
    return geom, ShiftedPower(1, 4)


@pytest.fixture(scope="session")
def line_kernel(line_setup):
    return LimitKernel(*line_setup)


@pytest.fixture(scope="session")
def disk_kernel(disk_setup):
    return LimitKernel(*disk_setup)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
