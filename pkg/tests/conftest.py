import pytest

from tfwlab.grid import Grid
from tfwlab.groundstate import SolverOptions, solve_ground_state
from tfwlab.nuclei import NuclearConfig, NucleusShape, assemble_density


@pytest.fixture
def grid():
    return Grid(16, 8.0)


@pytest.fixture
def shape():
    return NucleusShape(1.5)


@pytest.fixture
def opts():
    return SolverOptions(tol=1e-9, max_iter=20000)


@pytest.fixture
def pair(shape):
    """Two nuclei on grid points over a weak background."""
    return NuclearConfig([[2.0, 3.0, 4.0], [5.5, 4.0, 4.5]], 8.0, shape, 0.05)


@pytest.fixture
def pair_state(pair, grid, opts):
    m = assemble_density(pair, grid)
    return m, solve_ground_state(m, opts)
