import numpy as np
import pytest

from mabarrier.domain import disk, polygon, unit_square


@pytest.fixture
def unit_disk():
    return disk((0.0, 0.0), 1.0)


@pytest.fixture
def square():
    return unit_square()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TRIANGLE = polygon([(0, 0), (1, 0), (0, 1)])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
