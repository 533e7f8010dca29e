import numpy as np
import pytest

from qchydro import fields


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid2():
    return fields.Grid.cube(32, dim=2)


@pytest.fixture
def grid3():
    return fields.Grid.cube(16, dim=3)


def smooth(grid, kx=1, ky=2, phase=0.3):
    x = grid.mesh()
    out = np.sin(kx * x[0] + phase) * np.cos(ky * x[1])
    if grid.dim == 3:
        out = out * (1.0 + 0.5 * np.cos(x[2]))
    return out


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
