import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import stmhd


@pytest.fixture(scope="session")
def island_small():
    """Island coalescence on a 2x2 mesh, two time steps."""
    prob = stmhd.by_name("island_coalescence")
    return stmhd.discretize(prob, 0.5, 0.5, 1.0)


@pytest.fixture(scope="session")
def island_medium():
    """Island coalescence on a 4x4 mesh, two time steps."""
    prob = stmhd.by_name("island_coalescence")
    return stmhd.discretize(prob, 0.25, 0.5, 1.0)


@pytest.fixture(scope="session")
def tearing_small():
    """Tearing mode on the coarsest valid grid, two time steps."""
    prob = stmhd.by_name("tearing_mode")
    return stmhd.discretize(prob, 0.25, 0.5, 1.0)


@pytest.fixture(scope="session")
def island_small_setup(island_small):
    """State, Jacobian, and triangular preconditioner at the initial guess."""
    state = stmhd.initial_state(island_small)
    jac = stmhd.assemble_jacobian(state, island_small)
    prec = stmhd.SpaceTimePreconditioner(jac, island_small, state)
    return island_small, state, jac, prec
