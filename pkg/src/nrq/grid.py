"""Truncated-domain discretization: box grids, zero-extended fields,
pair weights for the singular kernel, and Lebesgue norms.

The computational domain is the box [-L, L]^N sampled on a uniform lattice.
Fields live on the box nodes and are extended by zero on ``padding`` extra
lattice shells, which approximate the interaction of the support with the
exterior.  The nonlocal measure contributes a weight

    w = 2 * h^{2N} / |x - y|^N

per unordered node pair (the factor 2 folds the symmetric (y, x) copy).
Node quadrature is plain midpoint: each node owns a cell of volume h^N.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

__all__ = [
    "BoxGrid",
    "Field",
    "PotentialPair",
    "PairTable",
    "DiagonalPair",
    "holder_quotient",
    "pair_weights",
    "build_pair_table",
    "lp_norm",
    "weighted_q_norm",
]


class DiagonalPair(ValueError):
    """The s-Hoelder quotient was requested on a pair with x = y."""


@dataclass(frozen=True)
class BoxGrid:
    """Uniform lattice on [-L, L]^N, N in {1, 2}."""

    dim: int
    half_width: float
    n_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if self.n_per_axis < 8:
            raise ValueError("need at least 8 nodes per axis")
        if self.half_width <= 0:
            raise ValueError("half width must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_per_axis - 1)

    @property
    def n_nodes(self) -> int:
        return self.n_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_per_axis)

    def nodes(self) -> np.ndarray:
        """(n_nodes, dim) array of node coordinates, raster order."""
        ax = self.axis()
        if self.dim == 1:
            return ax[:, None]
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def extended_nodes(self, padding: int) -> tuple[np.ndarray, int]:
        """Nodes of box plus ``padding`` zero-extension shells.

        Returns (coords, n_box): the first ``n_box`` rows are the box nodes
        in raster order; the remainder are padding nodes.
        """
        h = self.spacing
        n = self.n_per_axis
        if self.dim == 1:
            idx = np.arange(-padding, n + padding)
            coords = (-self.half_width + idx * h)[:, None]
            box = (idx >= 0) & (idx < n)
        else:
            rng = np.arange(-padding, n + padding)
            I, J = np.meshgrid(rng, rng, indexing="ij")
            I, J = I.ravel(), J.ravel()
            coords = np.column_stack(
                [-self.half_width + I * h, -self.half_width + J * h]
            )
            box = (I >= 0) & (I < n) & (J >= 0) & (J < n)
        order = np.argsort(~box, kind="stable")  # box nodes first, raster order
        return coords[order], int(box.sum())


@dataclass
class Field:
    """Grid function on the box nodes, implicitly zero outside."""

    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.n_nodes:
            raise ValueError(
                f"field has {self.values.size} values, grid has {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.values * float(c))

    __rmul__ = __mul__


def gaussian_bump(grid: BoxGrid, center=0.0, sigma: Optional[float] = None,
                  amplitude: float = 1.0) -> Field:
    """Gaussian bump field, the workhorse seed."""
    if sigma is None:
        sigma = grid.half_width / 4.0
    pts = grid.nodes()
    c = np.full(grid.dim, center, dtype=float) if np.ndim(center) == 0 else np.asarray(center, float)
    r2 = ((pts - c[None, :]) ** 2).sum(axis=1)
    return Field(grid, amplitude * np.exp(-r2 / (2.0 * sigma**2)))


@dataclass
class PotentialPair:
    """Confining potential V >= V0 > 0 and weight a > 0 on the box nodes."""

    V: np.ndarray
    a: np.ndarray
    V0: float

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float).ravel()
        self.a = np.asarray(self.a, dtype=float).ravel()
        if self.V0 <= 0:
            raise ValueError("coercivity floor V0 must be positive")
        if np.any(self.V < self.V0 - 1e-12):
            raise ValueError("potential dips below its declared floor V0")
        if np.any(self.a <= 0):
            raise ValueError("weight a must be strictly positive")

    def a_r_norm(self, r: float, cell_volume: float) -> float:
        """Discrete ||a||_r with the grid quadrature."""
        return float((cell_volume * np.sum(self.a**r)) ** (1.0 / r))

    @property
    def a_inf_norm(self) -> float:
        return float(self.a.max())

    def sublevel_fraction(self, M: float) -> float:
        """Fraction of nodes with V <= M (finite-box confinement proxy)."""
        return float(np.mean(self.V <= M))


def holder_quotient(u: Field, x: int, y: int, s: float) -> float:
    """(u(x) - u(y)) / |x - y|^s for node indices x != y."""
    if x == y:
        raise DiagonalPair("the quotient is undefined on the diagonal x = y")
    pts = u.grid.nodes()
    dist = float(np.linalg.norm(pts[x] - pts[y]))
    return float((u.values[x] - u.values[y]) / dist**s)


@dataclass(frozen=True)
class PairTable:
    """Flattened unordered node pairs with kernel weights.

    ``i``/``j`` index into the extended node list (box nodes first).  Each
    unordered pair appears once with the symmetric multiplicity folded into
    ``w``; pairs with both nodes in the padding are dropped (the integrand
    vanishes there for zero-extended fields).
    """

    i: np.ndarray
    j: np.ndarray
    dist: np.ndarray
    w: np.ndarray
    n_box: int
    n_ext: int
    padding: int

    def extend(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_ext)
        out[: self.n_box] = values
        return out


def build_pair_table(grid: BoxGrid, padding: Optional[int] = None) -> PairTable:
    """Enumerate pairs of box+padding nodes with at least one box node."""
    if padding is None:
        padding = max(1, grid.n_per_axis // 4)
    coords, n_box = grid.extended_nodes(padding)
    n_ext = coords.shape[0]
    ii, jj = np.triu_indices(n_ext, k=1)
    keep = (ii < n_box) | (jj < n_box)
    ii, jj = ii[keep], jj[keep]
    diff = coords[ii] - coords[jj]
    dist = np.sqrt((diff**2).sum(axis=1))
    h = grid.spacing
    w = 2.0 * h ** (2 * grid.dim) / dist**grid.dim
    return PairTable(ii, jj, dist, w, n_box, n_ext, padding)


def pair_weights(grid: BoxGrid, padding: int) -> Iterator[tuple[int, int, float]]:
    """Iterate (i, j, w) over unordered pairs; w folds the (j, i) copy."""
    table = build_pair_table(grid, padding)
    for i, j, w in zip(table.i, table.j, table.w):
        yield int(i), int(j), float(w)


def lp_norm(u: Field, p: float) -> float:
    """(sum h^N |u_i|^p)^{1/p}."""
    hN = u.grid.cell_volume
    return float((hN * np.sum(np.abs(u.values) ** p)) ** (1.0 / p))


def weighted_q_norm(u: Field, a: np.ndarray, q: float) -> float:
    """(sum h^N a_i |u_i|^q)^{1/q}."""
    a = np.asarray(a, dtype=float).ravel()
    if np.any(a <= 0):
        raise ValueError("weight a must be strictly positive")
    hN = u.grid.cell_volume
    return float((hN * np.sum(a * np.abs(u.values) ** q)) ** (1.0 / q))
