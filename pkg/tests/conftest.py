"""Shared fixtures.  The heavy objects (certified ground states on the
production grid) are session-scoped; cheaper tests use a coarser grid."""
import numpy as np
import pytest

from threewave import NonlinearitySpec, SystemSpec, make_grid
from threewave.functionals import energy_J
from threewave.ground import least_energy_set
from threewave.minimax import make_box

CUBIC = NonlinearitySpec(m=1.0, a=1.0, b=0.0, p=3.0)
# two-power spec with F <= 0 everywhere (fails (f3)); used as species 3 on
# the Y branch
NO_F3 = NonlinearitySpec(m=1.0, a=1.0, b=0.5, p=3.0, q=4.0)


@pytest.fixture(scope="session")
def grid3():
    return make_grid(3, 20.0, 2000)


@pytest.fixture(scope="session")
def grid3_coarse():
    return make_grid(3, 20.0, 1200)


@pytest.fixture(scope="session")
def ground3(grid3):
    """Certified N=3 cubic ground state on the production grid."""
    return least_energy_set(CUBIC, grid3)


@pytest.fixture(scope="session")
def ground3_coarse(grid3_coarse):
    return least_energy_set(CUBIC, grid3_coarse)


@pytest.fixture(scope="session")
def sys3_factory(grid3):
    def make(alpha, spec3=CUBIC):
        return SystemSpec((CUBIC, CUBIC, spec3), alpha, grid3)
    return make


@pytest.fixture(scope="session")
def box_x(ground3):
    return make_box("X_box", (ground3, ground3, ground3))


@pytest.fixture(scope="session")
def box_y(ground3):
    return make_box("Y_box", (ground3, ground3),
                    j3_check=lambda u: energy_J(NO_F3, u))


def smooth_field(grid, seed, decay=5.0, nterms=3):
    """Deterministic random smooth decaying field vanishing at r_max."""
    rng = np.random.default_rng(seed)
    r = grid.nodes
    vals = np.zeros(grid.n)
    for _ in range(nterms):
        w = rng.uniform(0.5, 2.5)
        c = rng.uniform(0.0, 4.0)
        amp = rng.uniform(-1.0, 1.0)
        vals += amp * np.exp(-(r - c) ** 2 / (2 * w ** 2))
    vals *= np.exp(-(r / decay) ** 2)
    vals[-1] = 0.0
    return vals
