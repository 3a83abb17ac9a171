import numpy as np
import pytest

from lcskit.deformation import deformation_field
from lcskit.dynamics import linear_saddle, nonlinear_saddle
from lcskit.flowmap import Grid2, deformation_gradient_grid

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid201():
    return Grid2((-1.0, 1.0), (-1.0, 1.0), 201, 201)


@pytest.fixture(scope="session")
def saddle():
    return nonlinear_saddle()


@pytest.fixture(scope="session")
def saddle_T1(saddle, grid201):
    return deformation_field(deformation_gradient_grid(saddle, grid201, 0.0, 1.0))


@pytest.fixture(scope="session")
def saddle_T1_backward(saddle, grid201):
    """Backward flow 1 -> 0 on the same grid, placed at t = 1."""
    return deformation_field(deformation_gradient_grid(saddle, grid201, 1.0, 0.0))


@pytest.fixture(scope="session")
def saddle_T20(saddle, grid201):
    return deformation_field(deformation_gradient_grid(saddle, grid201, 0.0, 20.0))


@pytest.fixture(scope="session")
def linear_T1(grid201):
    return deformation_field(deformation_gradient_grid(linear_saddle(0.3), grid201, 0.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
