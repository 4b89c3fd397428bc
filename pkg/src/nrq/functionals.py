"""Modular, Luxemburg norm, energy functional and its derivatives.

Everything downstream (fibering maps, extremal curves, branch solves)
consumes the quantities computed here.  All integrals share the grid
quadrature of :mod:`nrq.grid`: pair sums for the kernel part, h^N node
sums for the bulk part, so the algebraic identities of the continuum
theory hold to rounding rather than to discretization error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import BoxGrid, Field, PairTable, PotentialPair, build_pair_table
from .nfunction import GrowthLaw, check_hypotheses

__all__ = [
    "ProblemData",
    "EnergyBreakdown",
    "EmbeddingEstimate",
    "modular",
    "modular_derivative",
    "modular_second_diag",
    "modular_gradient",
    "energy",
    "energy_derivative",
    "energy_second_diag",
    "energy_gradient",
    "nehari_second_identities",
    "luxemburg_norm",
    "normalize",
    "padding_tail_estimate",
    "embedding_constant",
]

LUX_BRACKET = (1e-12, 1e12)
LUX_MAX_ITER = 200
LUX_REL_TOL = 1e-12


@dataclass
class ProblemData:
    """Validated problem bundle (law, s, grid, potentials, q, p, lambda, mu).

    Construction checks the structural hypotheses; mu may be any real so
    that the nonexistence regime can be probed.  The pair table and the
    s-powers of pair distances are cached here and shared by copies made
    with :meth:`with_params`.
    """

    law: GrowthLaw
    s: float
    grid: BoxGrid
    pots: PotentialPair
    q: float
    p: float
    lam: float
    mu: float
    padding: Optional[int] = None
    validate: bool = True

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if not (0 < self.s <= 1):
            raise ValueError("fractional order s must lie in (0, 1]")
        if self.pots.V.size != self.grid.n_nodes or self.pots.a.size != self.grid.n_nodes:
            raise ValueError("potential arrays must match the grid")
        if self.validate:
            report = check_hypotheses(self.law, self.s, self.grid.dim, self.q, self.p)
            if not report.all_pass:
                failed = [ln for ln in report.lines() if "FAIL" in ln]
                raise ValueError("hypothesis check failed:\n" + "\n".join(failed))
        self.pairs: PairTable = build_pair_table(self.grid, self.padding)
        self.dspow = self.pairs.dist**self.s
        self.hN = self.grid.cell_volume
        self._lux_basis: Optional[np.ndarray] = None
        self._embedding: dict[float, "EmbeddingEstimate"] = {}

    @property
    def r_exponent(self) -> float:
        """Hoelder conjugate r = (p/q)' = p/(p-q)."""
        return self.p / (self.p - self.q)

    def with_params(self, lam: Optional[float] = None, mu: Optional[float] = None) -> "ProblemData":
        """Copy sharing all geometric caches, with new (lambda, mu)."""
        other = object.__new__(ProblemData)
        other.__dict__.update(self.__dict__)
        if lam is not None:
            if lam <= 0:
                raise ValueError("lambda must be positive")
            other.lam = float(lam)
        if mu is not None:
            other.mu = float(mu)
        return other

    # -- cached helpers ------------------------------------------------------

    def pair_diffs(self, values: np.ndarray) -> np.ndarray:
        """Signed s-Hoelder quotients over the pair table."""
        ue = self.pairs.extend(values)
        return (ue[self.pairs.i] - ue[self.pairs.j]) / self.dspow

    def scatter_pairs(self, coef: np.ndarray) -> np.ndarray:
        """Accumulate per-pair coefficients into per-box-node sums.

        For a pair (i, j) the direction e_k enters the quotient with sign
        +1 at i and -1 at j, divided by dist^s.
        """
        c = coef / self.dspow
        n = self.pairs.n_ext
        out = np.bincount(self.pairs.i, weights=c, minlength=n)
        out -= np.bincount(self.pairs.j, weights=c, minlength=n)
        return out[: self.pairs.n_box]

    def lux_basis_norms(self) -> np.ndarray:
        """Luxemburg norms of the coordinate basis fields, vectorized."""
        if self._lux_basis is None:
            n = self.grid.n_nodes
            pt = self.pairs
            box_pairs_i = pt.i < n
            box_pairs_j = pt.j < n

            def mod_all(sigma: np.ndarray) -> np.ndarray:
                # modular of e_k / sigma_k for every k at once
                out = self.hN * self.pots.V * self.law.Phi(1.0 / sigma)
                vals_i = self.law.Phi(1.0 / (sigma[pt.i[box_pairs_i]] * self.dspow[box_pairs_i]))
                vals_j = self.law.Phi(1.0 / (sigma[pt.j[box_pairs_j]] * self.dspow[box_pairs_j]))
                out += np.bincount(pt.i[box_pairs_i], weights=pt.w[box_pairs_i] * vals_i,
                                   minlength=pt.n_ext)[:n]
                out += np.bincount(pt.j[box_pairs_j], weights=pt.w[box_pairs_j] * vals_j,
                                   minlength=pt.n_ext)[:n]
                return out

            lo = np.full(n, LUX_BRACKET[0])
            hi = np.full(n, LUX_BRACKET[1])
            for _ in range(LUX_MAX_ITER):
                mid = np.sqrt(lo * hi)
                high = mod_all(mid) > 1.0
                lo = np.where(high, mid, lo)
                hi = np.where(high, hi, mid)
                if np.all(hi - lo <= LUX_REL_TOL * hi):
                    break
            self._lux_basis = np.sqrt(lo * hi)
        return self._lux_basis

    def embedding(self, r: float, rng=None) -> "EmbeddingEstimate":
        if r not in self._embedding:
            self._embedding[r] = embedding_constant(self, r, rng=rng)
        return self._embedding[r]

    def fold_embedding_witness(self, r: float, u: Field) -> None:
        """Raise the cached S_r estimate if ``u`` witnesses a larger ratio."""
        est = self.embedding(r)
        lux = luxemburg_norm(u, self)
        if lux > 0:
            from .grid import lp_norm

            ratio = lp_norm(u, r) / lux
            if ratio > est.value:
                est.value = ratio


@dataclass
class EnergyBreakdown:
    """The five scalars every certificate is built from."""

    modular: float
    mod_diag: float
    mod_second_diag: float
    q_term: float
    p_term: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "modular": self.modular,
                "mod_diag": self.mod_diag,
                "mod_second_diag": self.mod_second_diag,
                "q_term": self.q_term,
                "p_term": self.p_term,
            },
            sort_keys=True,
        )


# ---------------------------------------------------------------------------
# modular and energy
# ---------------------------------------------------------------------------

def modular(u: Field, pd: ProblemData) -> float:
    """Kernel + bulk modular: sum w*Phi(D_s u) + sum h^N V Phi(u)."""
    d = pd.pair_diffs(u.values)
    kernel = float(np.sum(pd.pairs.w * pd.law.Phi(d)))
    bulk = float(pd.hN * np.sum(pd.pots.V * pd.law.Phi(u.values)))
    return kernel + bulk


def modular_derivative(u: Field, v: Field, pd: ProblemData) -> float:
    """First variation of the modular at u in direction v."""
    du = pd.pair_diffs(u.values)
    dv = pd.pair_diffs(v.values)
    kernel = float(np.sum(pd.pairs.w * np.sign(du) * pd.law.phi_t(np.abs(du)) * dv))
    uu = u.values
    bulk = float(
        pd.hN * np.sum(pd.pots.V * np.sign(uu) * pd.law.phi_t(np.abs(uu)) * v.values)
    )
    return kernel + bulk


def modular_diag(u: Field, pd: ProblemData) -> float:
    """J'(u)u via the phi*t^2 combination (cheaper than a full direction)."""
    du = np.abs(pd.pair_diffs(u.values))
    kernel = float(np.sum(pd.pairs.w * pd.law.phi_tt(du)))
    bulk = float(pd.hN * np.sum(pd.pots.V * pd.law.phi_tt(np.abs(u.values))))
    return kernel + bulk


def modular_second_diag(u: Field, pd: ProblemData) -> float:
    """J''(u)(u,u) = sum w [phi'|D|^3 + phi|D|^2] + bulk analogue."""
    du = np.abs(pd.pair_diffs(u.values))
    au = np.abs(u.values)
    kernel = float(np.sum(pd.pairs.w * (pd.law.dphi_ttt(du) + pd.law.phi_tt(du))))
    bulk = float(
        pd.hN * np.sum(pd.pots.V * (pd.law.dphi_ttt(au) + pd.law.phi_tt(au)))
    )
    return kernel + bulk


def modular_gradient(u: Field, pd: ProblemData) -> np.ndarray:
    """Euclidean gradient of the modular: grad[k] = J'(u) e_k."""
    du = pd.pair_diffs(u.values)
    coef = pd.pairs.w * np.sign(du) * pd.law.phi_t(np.abs(du))
    grad = pd.scatter_pairs(coef)
    uu = u.values
    grad += pd.hN * pd.pots.V * np.sign(uu) * pd.law.phi_t(np.abs(uu))
    return grad


def breakdown(u: Field, pd: ProblemData) -> EnergyBreakdown:
    absu = np.abs(u.values)
    return EnergyBreakdown(
        modular=modular(u, pd),
        mod_diag=modular_diag(u, pd),
        mod_second_diag=modular_second_diag(u, pd),
        q_term=float(pd.hN * np.sum(pd.pots.a * absu**pd.q)),
        p_term=float(pd.hN * np.sum(absu**pd.p)),
    )


def q_term(u: Field, pd: ProblemData) -> float:
    """||u||_{q,a}^q with the grid quadrature."""
    return float(pd.hN * np.sum(pd.pots.a * np.abs(u.values) ** pd.q))


def p_term(u: Field, pd: ProblemData) -> float:
    """||u||_p^p with the grid quadrature."""
    return float(pd.hN * np.sum(np.abs(u.values) ** pd.p))


def signed_power(u: np.ndarray, e: float) -> np.ndarray:
    """|u|^e * sign(u), with the 0 limit enforced for e > 0."""
    out = np.zeros_like(u)
    nz = u != 0
    out[nz] = np.abs(u[nz]) ** e * np.sign(u[nz])
    return out


def energy(u: Field, pd: ProblemData) -> float:
    return modular(u, pd) - (pd.mu / pd.q) * q_term(u, pd) + (pd.lam / pd.p) * p_term(u, pd)


def energy_derivative(u: Field, v: Field, pd: ProblemData) -> float:
    uu, vv = u.values, v.values
    lower = float(pd.hN * np.sum(pd.pots.a * signed_power(uu, pd.q - 1.0) * vv))
    upper = float(pd.hN * np.sum(signed_power(uu, pd.p - 1.0) * vv))
    return modular_derivative(u, v, pd) - pd.mu * lower + pd.lam * upper


def energy_second_diag(u: Field, pd: ProblemData) -> float:
    return (
        modular_second_diag(u, pd)
        - pd.mu * (pd.q - 1.0) * q_term(u, pd)
        + pd.lam * (pd.p - 1.0) * p_term(u, pd)
    )


def energy_gradient(u: Field, pd: ProblemData) -> np.ndarray:
    """grad[k] = I'(u) e_k, one kernel sweep plus diagonal bulk terms."""
    uu = u.values
    grad = modular_gradient(u, pd)
    grad -= pd.mu * pd.hN * pd.pots.a * signed_power(uu, pd.q - 1.0)
    grad += pd.lam * pd.hN * signed_power(uu, pd.p - 1.0)
    return grad


def nehari_second_identities(u: Field, pd: ProblemData) -> tuple[float, float]:
    """The two on-manifold forms of I''(u)(u,u).

    Valid when I'(u)u = 0; both substitute the Nehari identity into the
    second derivative, once eliminating the mu-term and once the lambda-term.
    """
    du = np.abs(pd.pair_diffs(u.values))
    au = np.abs(u.values)
    kq = float(
        np.sum(pd.pairs.w * (pd.law.dphi_ttt(du) + (2.0 - pd.q) * pd.law.phi_tt(du)))
    )
    bq = float(
        pd.hN
        * np.sum(pd.pots.V * (pd.law.dphi_ttt(au) + (2.0 - pd.q) * pd.law.phi_tt(au)))
    )
    kp = float(
        np.sum(pd.pairs.w * (pd.law.dphi_ttt(du) + (2.0 - pd.p) * pd.law.phi_tt(du)))
    )
    bp = float(
        pd.hN
        * np.sum(pd.pots.V * (pd.law.dphi_ttt(au) + (2.0 - pd.p) * pd.law.phi_tt(au)))
    )
    first = kq + bq + pd.lam * (pd.p - pd.q) * p_term(u, pd)
    second = kp + bp + (pd.p - pd.q) * pd.mu * q_term(u, pd)
    return first, second


# ---------------------------------------------------------------------------
# Luxemburg norm
# ---------------------------------------------------------------------------

def luxemburg_norm(u: Field, pd: ProblemData) -> float:
    """inf{sigma > 0 : modular(u/sigma) <= 1} by monotone bisection."""
    if not np.any(u.values):
        return 0.0

    def mod_at(sigma: float) -> float:
        return modular(Field(u.grid, u.values / sigma), pd)

    lo, hi = LUX_BRACKET
    if mod_at(hi) > 1.0 or mod_at(lo) < 1.0:
        raise ValueError("Luxemburg bracket exhausted; field is badly scaled")
    for _ in range(LUX_MAX_ITER):
        mid = np.sqrt(lo * hi)
        if mod_at(mid) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= LUX_REL_TOL * hi:
            break
    return float(np.sqrt(lo * hi))


def normalize(u: Field, pd: ProblemData) -> Field:
    """Scale to unit Luxemburg norm."""
    nrm = luxemburg_norm(u, pd)
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero field")
    return Field(u.grid, u.values / nrm)


def padding_tail_estimate(u: Field, pd: ProblemData) -> float:
    """One-shell Richardson proxy for the dropped zero-extension tail.

    Difference of the modular between the configured padding and one shell
    fewer; the true truncation error of the kernel integral is of this
    order since shell contributions decay geometrically in |x - y|.
    """
    pad = pd.pairs.padding
    if pad < 1:
        return float("nan")
    inner = ProblemData(
        pd.law, pd.s, pd.grid, pd.pots, pd.q, pd.p, pd.lam, pd.mu,
        padding=pad - 1, validate=False,
    )
    return abs(modular(u, pd) - modular(u, inner))


# ---------------------------------------------------------------------------
# embedding constants
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingEstimate:
    """Sampled lower estimate of the best constant of X -> L^r.

    ``value`` is a max over ascent runs (an under-estimate of the discrete
    supremum, reported as such); ``spread`` is the max-min over restarts.
    """

    r: float
    value: float
    spread: float
    maximizer: Field


def embedding_constant(
    pd: ProblemData,
    r: float,
    restarts: int = 4,
    iters: int = 120,
    rng=None,
) -> EmbeddingEstimate:
    """Maximize ||u||_r / ||u|| by projected ascent from multistart bumps."""
    from .grid import gaussian_bump, lp_norm

    rng = np.random.default_rng(rng if rng is not None else 0)
    g = pd.grid
    seeds = [
        gaussian_bump(g),
        gaussian_bump(g, sigma=g.half_width / 10.0),
        Field(g, gaussian_bump(g, center=g.half_width / 2).values
              + gaussian_bump(g, center=-g.half_width / 2).values),
    ]
    while len(seeds) < restarts:
        seeds.append(Field(g, np.abs(rng.standard_normal(g.n_nodes)) + 1e-3))

    best = []
    for seed in seeds:
        u = normalize(seed, pd)
        val = lp_norm(u, r)
        step = 0.5
        for _ in range(iters):
            # ascent direction: gradient of ||u||_r on the Luxemburg sphere
            absu = np.abs(u.values)
            gvec = pd.hN * r * np.sign(u.values) * absu ** (r - 1.0)
            gvec /= max(np.linalg.norm(gvec), 1e-300)
            improved = False
            while step > 1e-12:
                cand = Field(g, u.values + step * gvec)
                if not np.any(cand.values):
                    step /= 2.0
                    continue
                cand = normalize(cand, pd)
                cval = lp_norm(cand, r)
                if cval > val * (1.0 + 1e-14):
                    u, val = cand, cval
                    improved = True
                    step *= 1.3
                    break
                step /= 2.0
            if not improved:
                break
        best.append((val, u))
    vals = [v for v, _ in best]
    vstar, ustar = max(best, key=lambda t: t[0])
    return EmbeddingEstimate(r=r, value=float(vstar),
                             spread=float(max(vals) - min(vals)), maximizer=ustar)
