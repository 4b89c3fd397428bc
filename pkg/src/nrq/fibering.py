"""Fibering maps and Rayleigh quotients along rays.

For a fixed nontrivial field u the two quotients

    Q_n(t) = R_n(t u)   and   Q_e(t) = R_e(t u)

each have a unique minimum, at t(u) and s(u) respectively.  Both critical
points are found by expanding a bracket and bisecting the strictly
increasing reformulations K_u / L_u, which inherit the monotone-bisection
guarantee that raw dQ/dt lacks.  The level set Q_n(t) = mu carries the
Nehari roots t^-(u) < t(u) < t^+(u) whenever mu exceeds the ray minimum
Lambda_n(u) = Q_n(t(u)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Field
from .functionals import (
    ProblemData,
    energy_second_diag,
    normalize,
    p_term,
    q_term,
)
from .nfunction import BracketFailure

__all__ = [
    "Ray",
    "FiberingProfile",
    "NehariRoots",
    "ZeroDenominator",
    "NotOnNehari",
    "rayleigh_n",
    "rayleigh_e",
    "fibering_t",
    "fibering_s",
    "nehari_roots",
    "classify",
    "fibering_second",
    "build_profile",
]

T_REL_TOL = 1e-11
T_MAX_ITER = 300
BRACKET_FACTOR = 4.0
BRACKET_MAX = 300
DEGENERATE_BAND = 1e-9


class ZeroDenominator(ZeroDivisionError):
    """||u||_{q,a} vanished: Rayleigh quotients are undefined on this ray."""


class NotOnNehari(ValueError):
    """classify() was called at a point with R_n(tu) != mu."""


class Ray:
    """Cached sums along the ray {t*u : t > 0}.

    S_phi(t)   = sum w phi(t|D|)*(t|D|)^2 + bulk   (= J'(tu)(tu))
    S_dphi(t)  = sum w phi'(t|D|)*(t|D|)^3 + bulk
    S_ddphi(t) = sum w phi''(t|D|)*(t|D|)^4 + bulk (when phi'' exists)
    """

    def __init__(self, u: Field, pd: ProblemData):
        if not np.any(u.values):
            raise ValueError("fibering needs a nontrivial field")
        self.pd = pd
        self.absd = np.abs(pd.pair_diffs(u.values))
        self.absu = np.abs(u.values)
        self.B = p_term(u, pd)
        self.C = q_term(u, pd)
        if self.C <= 0.0:
            raise ZeroDenominator("||u||_{q,a}^q = 0 on this ray")

    def _sum(self, fn, t: float) -> float:
        pd = self.pd
        kernel = float(np.sum(pd.pairs.w * fn(t * self.absd)))
        bulk = float(pd.hN * np.sum(pd.pots.V * fn(t * self.absu)))
        return kernel + bulk

    def modular_at(self, t: float) -> float:
        return self._sum(self.pd.law.Phi, t)

    def s_phi(self, t: float) -> float:
        return self._sum(self.pd.law.phi_tt, t)

    def s_dphi(self, t: float) -> float:
        return self._sum(self.pd.law.dphi_ttt, t)

    def s_ddphi(self, t: float) -> float:
        return self._sum(self.pd.law.ddphi_t4, t)

    # -- quotients ----------------------------------------------------------
    def qn(self, t: float) -> float:
        pd = self.pd
        return (self.s_phi(t) + pd.lam * t**pd.p * self.B) / (t**pd.q * self.C)

    def qe(self, t: float) -> float:
        pd = self.pd
        num = self.modular_at(t) + (pd.lam / pd.p) * t**pd.p * self.B
        return pd.q * num / (t**pd.q * self.C)

    def k_fn(self, t: float) -> float:
        """Strictly increasing function whose root is t(u)."""
        pd = self.pd
        return t ** (-pd.p) * ((2.0 - pd.q) * self.s_phi(t) + self.s_dphi(t))

    def l_fn(self, t: float) -> float:
        """Strictly increasing function whose root is s(u)."""
        pd = self.pd
        return t ** (-pd.p) * (self.s_phi(t) - pd.q * self.modular_at(t))

    def dqn(self, t: float) -> float:
        pd = self.pd
        return (
            t ** (pd.p - pd.q - 1.0)
            * (self.k_fn(t) + pd.lam * (pd.p - pd.q) * self.B)
            / self.C
        )

    def dqe(self, t: float) -> float:
        pd = self.pd
        return (
            pd.q
            * t ** (pd.p - pd.q - 1.0)
            * (self.l_fn(t) + pd.lam * (pd.p - pd.q) / pd.p * self.B)
            / self.C
        )

    def d2qn(self, t: float) -> float:
        """Analytic second derivative; needs phi''."""
        pd = self.pd
        q = pd.q
        poly = (
            (2.0 - q) * (1.0 - q) * self.s_phi(t)
            + 2.0 * (2.0 - q) * self.s_dphi(t)
            + self.s_ddphi(t)
        )
        return (
            poly / t ** (q + 2.0)
            + pd.lam * (pd.p - q) * (pd.p - q - 1.0) * t ** (pd.p - q - 2.0) * self.B
        ) / self.C


def rayleigh_n(u: Field, pd: ProblemData) -> float:
    """R_n(u) = (J'(u)u + lambda ||u||_p^p) / ||u||_{q,a}^q."""
    return Ray(u, pd).qn(1.0)


def rayleigh_e(u: Field, pd: ProblemData) -> float:
    """R_e(u) = (J(u) + (lambda/p)||u||_p^p) / ((1/q)||u||_{q,a}^q)."""
    return Ray(u, pd).qe(1.0)


def _expand_bracket(g, lo_seed: float = 1.0):
    """Expand around the seed until ``g`` changes sign; g increasing."""
    lo = hi = lo_seed
    glo = g(lo)
    for _ in range(BRACKET_MAX):
        if glo <= 0.0:
            break
        lo /= BRACKET_FACTOR
        glo = g(lo)
    else:
        raise BracketFailure("no sign change toward 0; hypotheses violated?")
    ghi = g(hi)
    for _ in range(BRACKET_MAX):
        if ghi >= 0.0:
            break
        hi *= BRACKET_FACTOR
        ghi = g(hi)
    else:
        raise BracketFailure("no sign change toward infinity; hypotheses violated?")
    return lo, hi


def _bisect_increasing(g, lo: float, hi: float) -> float:
    """Bisection for an increasing g with a sign change on [lo, hi]."""
    for _ in range(T_MAX_ITER):
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= T_REL_TOL * hi:
            break
    return float(np.sqrt(lo * hi))


def fibering_t(u: Field, pd: ProblemData, ray: Optional[Ray] = None) -> float:
    """The unique minimizer t(u) of Q_n, via the monotone root of K_u."""
    ray = ray if ray is not None else Ray(u, pd)
    target = -pd.lam * (pd.p - pd.q) * ray.B

    def g(t):
        return ray.k_fn(t) - target

    lo, hi = _expand_bracket(g)
    return _bisect_increasing(g, lo, hi)


def fibering_s(u: Field, pd: ProblemData, ray: Optional[Ray] = None) -> float:
    """The unique minimizer s(u) of Q_e, via the monotone root of L_u."""
    ray = ray if ray is not None else Ray(u, pd)
    target = -pd.lam * (pd.p - pd.q) / pd.p * ray.B

    def g(t):
        return ray.l_fn(t) - target

    lo, hi = _expand_bracket(g)
    return _bisect_increasing(g, lo, hi)


@dataclass
class NehariRoots:
    """Roots of Q_n(t) = mu on a ray: empty, degenerate, or a bracketing pair."""

    status: str  # "empty" | "degenerate" | "two"
    t_crit: float
    lambda_n: float
    t_minus: Optional[float] = None
    t_plus: Optional[float] = None


def nehari_roots(u: Field, pd: ProblemData, ray: Optional[Ray] = None) -> NehariRoots:
    """Solve Q_n(t) = mu around the minimum t(u).

    Trichotomy by mu against Lambda_n(u) = Q_n(t(u)), with the degeneracy
    dead-band |mu - Lambda_n| <= 1e-9 * max(1, mu).
    """
    ray = ray if ray is not None else Ray(u, pd)
    t_crit = fibering_t(u, pd, ray)
    lam_n = ray.qn(t_crit)
    mu = pd.mu
    band = DEGENERATE_BAND * max(1.0, abs(mu))
    if abs(mu - lam_n) <= band:
        return NehariRoots("degenerate", t_crit, lam_n, t_minus=t_crit, t_plus=t_crit)
    if mu < lam_n:
        return NehariRoots("empty", t_crit, lam_n)

    # left root: Q_n decreasing on (0, t_crit)
    lo = t_crit / BRACKET_FACTOR
    for _ in range(BRACKET_MAX):
        if ray.qn(lo) >= mu:
            break
        lo /= BRACKET_FACTOR
    else:
        raise BracketFailure("left Nehari root: growth limit not reached")
    t_minus = _bisect_increasing(lambda t: mu - ray.qn(t), lo, t_crit)

    # right root: Q_n increasing on (t_crit, inf)
    hi = t_crit * BRACKET_FACTOR
    for _ in range(BRACKET_MAX):
        if ray.qn(hi) >= mu:
            break
        hi *= BRACKET_FACTOR
    else:
        raise BracketFailure("right Nehari root: growth limit not reached")
    t_plus = _bisect_increasing(lambda t: ray.qn(t) - mu, t_crit, hi)
    return NehariRoots("two", t_crit, lam_n, t_minus=t_minus, t_plus=t_plus)


def classification_band(w: Field, pd: ProblemData) -> float:
    """Scale-aware dead-band for the sign of I''(w)(w,w)."""
    from .functionals import modular_second_diag

    return 1e-8 * (
        abs(modular_second_diag(w, pd))
        + abs(pd.mu) * (pd.q - 1.0) * q_term(w, pd)
        + pd.lam * (pd.p - 1.0) * p_term(w, pd)
    )


def classify(u: Field, t: float, pd: ProblemData, tol: float = 1e-7) -> str:
    """Nehari branch of the point t*u: "minus", "plus" or "zero".

    Requires R_n(tu) = mu up to ``tol`` (relative); the sign of the second
    derivative is cross-checked against dQ_n/dt via the ray identity.
    """
    ray = Ray(u, pd)
    rn = ray.qn(t)
    if abs(rn - pd.mu) > tol * max(1.0, abs(pd.mu)):
        raise NotOnNehari(f"R_n(tu) = {rn:.12g} but mu = {pd.mu:.12g}")
    w = Field(u.grid, t * u.values)
    second = energy_second_diag(w, pd)
    band = classification_band(w, pd)
    if abs(second) <= band:
        return "zero"
    verdict = "plus" if second > 0 else "minus"
    slope = ray.dqn(t)
    slope_scale = band / (t * q_term(w, pd))
    if abs(slope) > slope_scale and (slope > 0) != (second > 0):
        raise RuntimeError(
            "sign of dQ_n/dt contradicts I''(w)(w,w); ray identity broken"
        )
    return verdict


def fibering_second(u: Field, t: float, pd: ProblemData) -> float:
    """d^2 Q_n / dt^2: analytic when phi'' exists, else Richardson FD."""
    ray = Ray(u, pd)
    if pd.law.has_second:
        return ray.d2qn(t)
    h = 1e-4 * t
    coarse = (ray.dqn(t + h) - ray.dqn(t - h)) / (2.0 * h)
    fine = (ray.dqn(t + h / 2.0) - ray.dqn(t - h / 2.0)) / h
    return (4.0 * fine - coarse) / 3.0


@dataclass
class FiberingProfile:
    """Critical points and levels of both quotients along one ray."""

    u: Field
    t_crit: float
    s_crit: float
    lambda_n: float
    lambda_e: float
    samples: Optional[np.ndarray] = None  # columns: t, Q_n, Q_e, dQ_n

    def sample_rows(self):
        return [] if self.samples is None else self.samples.tolist()


def build_profile(u: Field, pd: ProblemData, n_samples: int = 0) -> FiberingProfile:
    """Normalize u, locate both critical points, optionally sample the maps."""
    u = normalize(u, pd)
    ray = Ray(u, pd)
    t_crit = fibering_t(u, pd, ray)
    s_crit = fibering_s(u, pd, ray)
    lam_n = ray.qn(t_crit)
    lam_e = ray.qe(s_crit)
    samples = None
    if n_samples > 0:
        ts = np.geomspace(t_crit / 8.0, s_crit * 8.0, n_samples)
        samples = np.column_stack(
            [ts,
             [ray.qn(t) for t in ts],
             [ray.qe(t) for t in ts],
             [ray.dqn(t) for t in ts]]
        )
    return FiberingProfile(u, t_crit, s_crit, lam_n, lam_e, samples)
