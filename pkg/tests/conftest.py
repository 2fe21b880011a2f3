import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gplump.forms import ProblemData
from gplump.mesh import friedrichs_keller, interval_mesh, red_refine

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def harmonic(center=0.0):
    return lambda x: 0.5 * ((np.atleast_2d(x) - center) ** 2).sum(axis=-1)


@pytest.fixture(scope="session")
def unit_square_meshes():
    m = friedrichs_keller(((0.0, 0.0), (1.0, 1.0)), 2)
    out = [m]
    for _ in range(3):
        out.append(red_refine(out[-1]))
    return out  # 2, 4, 8, 16 cells per axis


@pytest.fixture(scope="session")
def small_problem(unit_square_meshes):
    return ProblemData.from_callable(unit_square_meshes[2], harmonic(0.5), 10.0)


@pytest.fixture
def line_mesh():
    return interval_mesh(0.0, 1.0, 8)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
