import numpy as np
import pytest
from hypothesis import settings

from treerwre import make_constant_env, make_critical_two_point

# numba compiles on first call, so per-example deadlines are meaningless
settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def crit2():
    return make_critical_two_point(2)


@pytest.fixture(scope="session")
def half2():
    return make_constant_env(2, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
