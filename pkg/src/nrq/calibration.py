"""Closed-form calibration fixture for the quadratic law.

Builds a field u and problem data with

    J'(u)u = A,   ||u||_p^p = B,   ||u||_{q,a}^q = C

hit exactly (to rounding) by scaling a wide Gaussian bump, tuning a
constant potential V for the bulk share of A, and rescaling a constant
weight a for C.  With the quadratic law and (q, p) = (3, 4) every fibering
quantity then has a closed form, e.g. Q_n(t) = A/t + lambda*B*t.
"""

from __future__ import annotations

import numpy as np

from .grid import BoxGrid, Field, PotentialPair, gaussian_bump, lp_norm
from .functionals import ProblemData
from .nfunction import power

__all__ = ["toy_problem", "TOY_A", "TOY_B", "TOY_C"]

TOY_A = 2.0
TOY_B = 0.5
TOY_C = 1.0


def toy_problem(
    mu: float = 2.5,
    lam: float = 1.0,
    n: int = 33,
    A: float = TOY_A,
    B: float = TOY_B,
    C: float = TOY_C,
) -> tuple[Field, ProblemData]:
    """Quadratic-law problem with the ray sums pinned to (A, B, C).

    The bump must be wide enough that its Gagliardo part stays below A;
    the constant potential picks up the remainder.
    """
    law = power(2)
    grid = BoxGrid(1, 16.0, n)
    probe = ProblemData(
        law, 0.4, grid,
        PotentialPair(np.ones(grid.n_nodes), np.ones(grid.n_nodes), 1.0),
        3.0, 4.0, 1.0, mu,
    )
    u0 = gaussian_bump(grid, sigma=5.0)
    alpha = (B / lp_norm(u0, 4.0) ** 4) ** 0.25
    u = Field(grid, alpha * u0.values)

    d = probe.pair_diffs(u.values)
    kernel = float(np.sum(probe.pairs.w * d * d))
    if kernel >= A:
        raise ValueError(f"bump too sharp: kernel part {kernel} exceeds target {A}")
    l2 = probe.hN * float(np.sum(u.values**2))
    c = (A - kernel) / l2
    gamma = C / (probe.hN * float(np.sum(np.abs(u.values) ** 3)))
    pots = PotentialPair(np.full(grid.n_nodes, c), np.full(grid.n_nodes, gamma), c)
    pd = ProblemData(law, 0.4, grid, pots, 3.0, 4.0, lam, mu)
    return u, pd
