import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ipmlab.experiments import make_gaussian, random_smooth_field
from ipmlab.spectral import Grid

settings.register_profile(
    "lab",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("lab")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def grid32():
    return Grid(32, 32, 32.0)


@pytest.fixture
def grid64():
    return Grid(64, 64, 32.0)


@pytest.fixture
def smooth64(grid64):
    return random_smooth_field(grid64, np.random.default_rng(1), kmax=4)


@pytest.fixture
def gauss64(grid64):
    return make_gaussian(grid64, (14.0, 16.0), 2.0, 0.5)
