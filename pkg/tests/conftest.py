import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bilinsteer.grid import Field, build_grid

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def grid1():
    return build_grid(1, 199)


@pytest.fixture(scope="session")
def grid2():
    return build_grid(2, 19)


@pytest.fixture(scope="session")
def sin1(grid1):
    return Field.from_function(grid1, lambda x: np.sin(np.pi * x))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
