import numpy as np
import pytest
from hypothesis import settings

from cablenmpc.allocation import build_allocation, regular_polygon
from cablenmpc.payload import PayloadParams
from cablenmpc.robot import RobotParams

# first calls pay for JIT compilation
settings.register_profile("default", deadline=None)
settings.load_profile("default")

# side 0.53 m equilateral triangle
TRI_RADIUS = 0.53 / np.sqrt(3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def payload():
    return PayloadParams(0.232, np.diag([2.72e-3, 2.72e-3, 5.43e-3]))


@pytest.fixture
def tri_model():
    return build_allocation(regular_polygon(3, TRI_RADIUS), np.ones(3))


@pytest.fixture
def robots():
    return [RobotParams() for _ in range(3)]


def random_quat(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
