"""Extremal parameter curves mu_n(lambda) < mu_e(lambda).

Both curves are infima of 0-homogeneous ray levels,

    mu_n = inf_u Lambda_n(u),   Lambda_n(u) = min_{t>0} R_n(t u),

estimated by projected descent on the unit Luxemburg sphere from
multistart seeds.  Gradients use the envelope theorem: the inner ray
minimum contributes no derivative, so

    grad Lambda_n(u) = t(u) * grad R_n(w) |_{w = t(u) u},

one kernel sweep per iteration.  A finite-difference fallback validates
the envelope gradient in the test suite.  Results are upper bounds on the
true discrete infima and are labeled estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import Field, gaussian_bump
from .functionals import (
    ProblemData,
    modular_gradient,
    normalize,
    q_term,
    signed_power,
)
from .fibering import Ray, ZeroDenominator, fibering_s, fibering_t

__all__ = [
    "ExtremalResult",
    "lambda_n",
    "lambda_e",
    "grad_lambda_n",
    "grad_lambda_e",
    "minimize_extremal",
    "extremal_curve",
    "default_seeds",
    "lambda_n_floor",
]

DESCENT_MAX_ITER = 500
DESCENT_REL_DECREASE = 1e-10


def lambda_n(u: Field, pd: ProblemData, ray: Optional[Ray] = None) -> float:
    """Lambda_n(u) = Q_n(t(u)), the ray minimum of R_n."""
    ray = ray if ray is not None else Ray(u, pd)
    return ray.qn(fibering_t(u, pd, ray))


def lambda_e(u: Field, pd: ProblemData, ray: Optional[Ray] = None) -> float:
    """Lambda_e(u) = Q_e(s(u)), the ray minimum of R_e."""
    ray = ray if ray is not None else Ray(u, pd)
    return ray.qe(fibering_s(u, pd, ray))


def _grad_diag_form(w: Field, pd: ProblemData) -> np.ndarray:
    """Gradient of w -> J'(w)w: pair sweep of d*(phi'(|d|)|d| + 2 phi(|d|))."""
    d = pd.pair_diffs(w.values)
    absd = np.abs(d)
    coef = pd.pairs.w * np.sign(d) * (pd.law.dphi_tt(absd) + 2.0 * pd.law.phi_t(absd))
    grad = pd.scatter_pairs(coef)
    ww = w.values
    absw = np.abs(ww)
    grad += pd.hN * pd.pots.V * np.sign(ww) * (
        pd.law.dphi_tt(absw) + 2.0 * pd.law.phi_t(absw)
    )
    return grad


def grad_lambda_n(u: Field, pd: ProblemData, ray: Optional[Ray] = None) -> np.ndarray:
    """Envelope gradient of Lambda_n at u."""
    ray = ray if ray is not None else Ray(u, pd)
    t = fibering_t(u, pd, ray)
    w = Field(u.grid, t * u.values)
    den = q_term(w, pd)
    rn = ray.qn(t)
    grad_num = _grad_diag_form(w, pd) + pd.lam * pd.hN * pd.p * signed_power(
        w.values, pd.p - 1.0
    )
    grad_den = pd.hN * pd.q * pd.pots.a * signed_power(w.values, pd.q - 1.0)
    return t * (grad_num - rn * grad_den) / den


def grad_lambda_e(u: Field, pd: ProblemData, ray: Optional[Ray] = None) -> np.ndarray:
    """Envelope gradient of Lambda_e at u."""
    ray = ray if ray is not None else Ray(u, pd)
    s = fibering_s(u, pd, ray)
    w = Field(u.grid, s * u.values)
    den = q_term(w, pd) / pd.q
    re = ray.qe(s)
    grad_num = modular_gradient(w, pd) + pd.lam * pd.hN * signed_power(
        w.values, pd.p - 1.0
    )
    grad_den = pd.hN * pd.pots.a * signed_power(w.values, pd.q - 1.0)
    return s * (grad_num - re * grad_den) / den


def fd_grad_lambda(u: Field, pd: ProblemData, which: str, eps: float = 1e-6) -> np.ndarray:
    """Coordinate-bump finite differences of Lambda (cross-check path)."""
    fn = lambda_n if which == "n" else lambda_e
    base = u.values
    grad = np.zeros_like(base)
    for k in range(base.size):
        bump = np.zeros_like(base)
        bump[k] = eps
        fp = fn(Field(u.grid, base + bump), pd)
        fm = fn(Field(u.grid, base - bump), pd)
        grad[k] = (fp - fm) / (2.0 * eps)
    return grad


def default_seeds(pd: ProblemData, rng=None, restarts: int = 4) -> list[Field]:
    """Positive bump seeds plus one sign-changing guard seed."""
    rng = np.random.default_rng(rng if rng is not None else 0)
    g = pd.grid
    L = g.half_width
    seeds = [
        gaussian_bump(g),
        Field(g, gaussian_bump(g, center=L / 2).values
              + gaussian_bump(g, center=-L / 2).values),
        Field(g, np.abs(rng.standard_normal(g.n_nodes)) + 0.05),
    ]
    flip = gaussian_bump(g).values.copy()
    flip[: g.n_nodes // 2] *= -1.0
    seeds.append(Field(g, flip))
    while len(seeds) < restarts:
        seeds.append(Field(g, np.abs(rng.standard_normal(g.n_nodes)) + 0.05))
    return seeds[:max(restarts, 4)]


@dataclass
class ExtremalResult:
    """Estimated extremal parameters at one lambda, with certificates."""

    lam: float
    mu_n: float
    mu_e: float
    minimizer_n: Field
    minimizer_e: Field
    spread_n: float
    spread_e: float
    lower_floor: float
    iterations_n: int = 0
    iterations_e: int = 0

    def row(self) -> dict:
        return {
            "lambda": self.lam,
            "mu_n": self.mu_n,
            "mu_e": self.mu_e,
            "spread_n": self.spread_n,
            "spread_e": self.spread_e,
            "floor": self.lower_floor,
        }


def _descend(
    seed: Field,
    pd: ProblemData,
    value_fn: Callable,
    grad_fn: Callable,
    max_iter: int = DESCENT_MAX_ITER,
) -> tuple[Field, float, int]:
    """Armijo projected descent of a 0-homogeneous ray level on the sphere."""
    u = normalize(seed, pd)
    ray = Ray(u, pd)
    val = value_fn(u, pd, ray)
    iters = 0
    step = None
    for it in range(max_iter):
        iters = it + 1
        g = grad_fn(u, pd, ray)
        # remove the (numerically tiny) radial component for stability
        uu = u.values
        g = g - (g @ uu) / (uu @ uu) * uu
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            break
        if step is None:
            step = 0.1 * float(np.linalg.norm(uu)) / gnorm
        improved = False
        for _ in range(40):
            cand_vals = uu - step * g
            if not np.any(cand_vals):
                step *= 0.5
                continue
            cand = normalize(Field(u.grid, cand_vals), pd)
            try:
                cand_ray = Ray(cand, pd)
                cand_val = value_fn(cand, pd, cand_ray)
            except (ZeroDenominator, OverflowError):
                step *= 0.5
                continue
            if cand_val <= val - 1e-4 * step * gnorm**2:
                rel_drop = (val - cand_val) / max(1.0, abs(val))
                u, ray, val = cand, cand_ray, cand_val
                step *= 1.5
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        if rel_drop < DESCENT_REL_DECREASE:
            break
    return u, val, iters


def lambda_n_floor(pd: ProblemData) -> float:
    """Analytic positive floor for Lambda_n with the discrete embedding constant.

    min of the small-norm branch  ell / (S_p^q ||a||_r)  and the large-norm
    branch  C_{l,m,p,q} lambda^{(q-l)/(p-l)} / ||a||_r.
    """
    ell, m, q, p = pd.law.ell, pd.law.m_idx, pd.q, pd.p
    Sp = pd.embedding(pd.p).value
    ar = pd.pots.a_r_norm(pd.r_exponent, pd.hN)
    small = ell / (Sp**q * ar)
    cfac = (p - ell) / (q - ell) * ((q - m) / (p - q)) ** ((p - q) / (p - ell))
    large = cfac * pd.lam ** ((q - ell) / (p - ell)) / ar
    return min(small, large)


def minimize_extremal(
    pd: ProblemData,
    which: str,
    restarts: int = 4,
    rng=None,
    seeds: Optional[list[Field]] = None,
    max_iter: int = DESCENT_MAX_ITER,
) -> tuple[Field, float, float, int]:
    """Best (minimizer, value) over restarts for Lambda_n or Lambda_e.

    Returns (field, value, spread, iterations); the value is an upper bound
    on the discrete infimum.
    """
    if restarts < 3:
        raise ValueError("need at least 3 restarts")
    if which not in ("n", "e"):
        raise ValueError("which must be 'n' or 'e'")
    value_fn = (lambda u, pd, ray: lambda_n(u, pd, ray)) if which == "n" else (
        lambda u, pd, ray: lambda_e(u, pd, ray)
    )
    grad_fn = grad_lambda_n if which == "n" else grad_lambda_e
    pool = list(seeds) if seeds else []
    pool.extend(default_seeds(pd, rng=rng, restarts=restarts))
    pool = pool[: max(restarts, len(pool) if seeds else restarts)]
    results = []
    total_iters = 0
    for seed in pool:
        try:
            u, val, iters = _descend(seed, pd, value_fn, grad_fn, max_iter=max_iter)
        except (ZeroDenominator, ValueError):
            continue
        total_iters += iters
        results.append((val, u))
    if not results:
        raise RuntimeError("no extremal restart produced a usable ray")
    vals = [v for v, _ in results]
    best_val, best_u = min(results, key=lambda t: t[0])
    return best_u, float(best_val), float(max(vals) - min(vals)), total_iters


def extremal_pair(
    pd: ProblemData,
    restarts: int = 4,
    rng=None,
    seeds_n: Optional[list[Field]] = None,
    seeds_e: Optional[list[Field]] = None,
    max_iter: int = DESCENT_MAX_ITER,
) -> ExtremalResult:
    """Estimate (mu_n, mu_e) at pd.lam with shared machinery."""
    un, mun, sn, itn = minimize_extremal(pd, "n", restarts, rng, seeds_n, max_iter)
    ue, mue, se, ite = minimize_extremal(pd, "e", restarts, rng, seeds_e, max_iter)
    return ExtremalResult(
        lam=pd.lam,
        mu_n=mun,
        mu_e=mue,
        minimizer_n=un,
        minimizer_e=ue,
        spread_n=sn,
        spread_e=se,
        lower_floor=lambda_n_floor(pd),
        iterations_n=itn,
        iterations_e=ite,
    )


def extremal_curve(
    pd_base: ProblemData,
    lambdas,
    restarts: int = 4,
    rng=None,
    max_iter: int = DESCENT_MAX_ITER,
) -> list[ExtremalResult]:
    """One ExtremalResult per lambda, warm-starting seeds from neighbors."""
    lambdas = list(lambdas)
    if any(l <= 0 for l in lambdas) or sorted(lambdas) != lambdas:
        raise ValueError("lambda values must be positive and sorted")
    out: list[ExtremalResult] = []
    warm_n: Optional[list[Field]] = None
    warm_e: Optional[list[Field]] = None
    for lam in lambdas:
        pd = pd_base.with_params(lam=lam)
        res = extremal_pair(pd, restarts, rng, warm_n, warm_e, max_iter)
        warm_n = [res.minimizer_n]
        warm_e = [res.minimizer_e]
        out.append(res)
    return out
