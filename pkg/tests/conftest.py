import numpy as np
import pytest

from nrq.grid import BoxGrid, PotentialPair
from nrq.functionals import ProblemData
from nrq.nfunction import power, power_log, power_sum


def make_pots(grid: BoxGrid, kind: str = "quadratic") -> PotentialPair:
    pts = grid.nodes()
    r2 = (pts**2).sum(axis=1)
    if kind == "quadratic":
        return PotentialPair(1.0 + r2, np.exp(-r2 / 2.0), 1.0)
    return PotentialPair(np.ones(grid.n_nodes), np.ones(grid.n_nodes), 1.0)


# (law, s, q, p) combinations satisfying every structural hypothesis
LAW_CONFIGS = {
    "power2": (power(2), 0.4, 3.0, 4.0),
    "ps23": (power_sum(2, 3), 0.3, 4.6, 4.95),
    "plog2": (power_log(2), 0.3, 4.6, 4.95),
}


def make_problem(name: str = "power2", n: int = 17, lam: float = 1.0,
                 mu: float = 2.0, L: float = 3.0, pots_kind: str = "quadratic"):
    law, s, q, p = LAW_CONFIGS[name]
    grid = BoxGrid(1, L, n)
    return ProblemData(law, s, grid, make_pots(grid, pots_kind), q, p, lam, mu)


@pytest.fixture(scope="session")
def small_problem():
    return make_problem(n=17)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(42)
