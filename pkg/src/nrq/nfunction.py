"""N-function (Orlicz) kernels: evaluation, conjugation, growth indices.

A :class:`GrowthLaw` packages the density ``phi``, its derivatives and the
primitive ``Phi(t) = int_0^t s*phi(s) ds`` together with the lower/upper
growth indices ``(ell, m)`` that control all modular/norm comparisons.

Built-in families:

* ``power(p)``:        Phi(t) = t^p / p
* ``power_sum(p, q)``: Phi(t) = t^p/p + t^q/q
* ``power_log(p)``:    Phi(t) = t^p * ln(1 + t)

Custom laws supply callables or tabulated ``(t, phi, phi')`` samples; the
primitive is then recovered by adaptive Simpson quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

__all__ = [
    "GrowthLaw",
    "ConjugateLaw",
    "SobolevConjugate",
    "HypothesisReport",
    "NonPositiveInput",
    "IndexViolation",
    "BracketFailure",
    "CriticalExponentUndefined",
    "power",
    "power_sum",
    "power_log",
    "custom",
    "custom_from_csv",
    "eval_law",
    "growth_indices",
    "check_hypotheses",
    "xi_bounds",
    "conjugate",
    "sobolev_conjugate",
]

MONOTONE_SLACK = 1e-12


class NonPositiveInput(ValueError):
    """phi was requested at t <= 0."""


class IndexViolation(ValueError):
    """Declared growth indices are inconsistent with sampled ratios."""


class BracketFailure(RuntimeError):
    """A monotone solve could not bracket a sign change."""


class CriticalExponentUndefined(ValueError):
    """N - s*m <= 0: the critical Sobolev index is not finite."""


def _as_array(t):
    return np.asarray(t, dtype=float)


def _masked_combination(t, f):
    """Evaluate ``f`` on the positive entries of ``t``, zero elsewhere.

    Every combination used by the modulars carries at least one factor of t,
    so 0 is the correct limit value even when phi itself blows up at 0.
    """
    t = _as_array(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros_like(t)
    pos = t > 0
    if pos.any():
        out[pos] = f(t[pos])
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class GrowthLaw:
    """An N-function Phi with density phi and growth indices (ell, m).

    ``phi_fn``/``phi_prime_fn`` act on strictly positive arguments;
    ``Phi_fn`` is defined for all t >= 0 with Phi(0) = 0.  ``phi_second_fn``
    is optional; consumers fall back to finite differences when missing.
    """

    kind: str
    ell: float
    m_idx: float
    phi_fn: Callable = field(repr=False)
    phi_prime_fn: Callable = field(repr=False)
    Phi_fn: Callable = field(repr=False)
    phi_second_fn: Optional[Callable] = field(default=None, repr=False)
    params: tuple = ()

    # -- raw evaluations ---------------------------------------------------
    def Phi(self, t):
        t = np.abs(_as_array(t))
        return self.Phi_fn(t)

    def phi(self, t):
        t = _as_array(t)
        if np.any(t <= 0):
            raise NonPositiveInput("phi is only defined for t > 0")
        return self.phi_fn(t)

    def phi_prime(self, t):
        t = _as_array(t)
        if np.any(t <= 0):
            raise NonPositiveInput("phi' is only defined for t > 0")
        return self.phi_prime_fn(t)

    @property
    def has_second(self) -> bool:
        return self.phi_second_fn is not None

    def phi_second(self, t):
        if self.phi_second_fn is None:
            raise ValueError(f"law {self.kind} does not carry phi''")
        t = _as_array(t)
        if np.any(t <= 0):
            raise NonPositiveInput("phi'' is only defined for t > 0")
        return self.phi_second_fn(t)

    # -- masked combinations (vanish at t = 0) ------------------------------
    def phi_t(self, t):
        """phi(t)*t, the derivative of Phi."""
        return _masked_combination(t, lambda x: self.phi_fn(x) * x)

    def phi_tt(self, t):
        """phi(t)*t^2."""
        return _masked_combination(t, lambda x: self.phi_fn(x) * x * x)

    def dphi_tt(self, t):
        """phi'(t)*t^2."""
        return _masked_combination(t, lambda x: self.phi_prime_fn(x) * x * x)

    def dphi_ttt(self, t):
        """phi'(t)*t^3."""
        return _masked_combination(t, lambda x: self.phi_prime_fn(x) * x**3)

    def ddphi_t4(self, t):
        """phi''(t)*t^4 (requires phi'')."""
        if self.phi_second_fn is None:
            raise ValueError(f"law {self.kind} does not carry phi''")
        return _masked_combination(t, lambda x: self.phi_second_fn(x) * x**4)


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def power(p: float) -> GrowthLaw:
    """Phi(t) = t^p / p, the homogeneous kernel (fractional p-Laplacian)."""
    if p <= 1:
        raise ValueError("power law needs p > 1")
    return GrowthLaw(
        kind="power",
        ell=float(p),
        m_idx=float(p),
        phi_fn=lambda t: t ** (p - 2.0),
        phi_prime_fn=lambda t: (p - 2.0) * t ** (p - 3.0),
        phi_second_fn=lambda t: (p - 2.0) * (p - 3.0) * t ** (p - 4.0),
        Phi_fn=lambda t: t**p / p,
        params=(float(p),),
    )


def power_sum(p: float, q: float) -> GrowthLaw:
    """Phi(t) = t^p/p + t^q/q with p < q (fractional (p,q)-Laplacian)."""
    if not 1 < p < q:
        raise ValueError("power_sum law needs 1 < p < q")
    return GrowthLaw(
        kind="power_sum",
        ell=float(p),
        m_idx=float(q),
        phi_fn=lambda t: t ** (p - 2.0) + t ** (q - 2.0),
        phi_prime_fn=lambda t: (p - 2.0) * t ** (p - 3.0) + (q - 2.0) * t ** (q - 3.0),
        phi_second_fn=lambda t: (p - 2.0) * (p - 3.0) * t ** (p - 4.0)
        + (q - 2.0) * (q - 3.0) * t ** (q - 4.0),
        Phi_fn=lambda t: t**p / p + t**q / q,
        params=(float(p), float(q)),
    )


def power_log(p: float) -> GrowthLaw:
    """Phi(t) = t^p * ln(1 + t); indices (p, p+1)."""
    if p <= 1:
        raise ValueError("power_log law needs p > 1")

    def _phi(t):
        return p * t ** (p - 2.0) * np.log1p(t) + t ** (p - 1.0) / (1.0 + t)

    def _phi_prime(t):
        g = 1.0 / (1.0 + t)
        return (
            p * (p - 2.0) * t ** (p - 3.0) * np.log1p(t)
            + (2.0 * p - 1.0) * t ** (p - 2.0) * g
            - t ** (p - 1.0) * g * g
        )

    def _phi_second(t):
        g = 1.0 / (1.0 + t)
        return (
            p * (p - 2.0) * (p - 3.0) * t ** (p - 4.0) * np.log1p(t)
            + (p - 2.0) * (3.0 * p - 1.0) * t ** (p - 3.0) * g
            - (3.0 * p - 2.0) * t ** (p - 2.0) * g * g
            + 2.0 * t ** (p - 1.0) * g**3
        )

    return GrowthLaw(
        kind="power_log",
        ell=float(p),
        m_idx=float(p) + 1.0,
        phi_fn=_phi,
        phi_prime_fn=_phi_prime,
        phi_second_fn=_phi_second,
        Phi_fn=lambda t: t**p * np.log1p(t),
        params=(float(p),),
    )


def _adaptive_simpson(f, a: float, b: float, rel_tol: float = 1e-10) -> float:
    """Adaptive Simpson quadrature with Richardson acceptance."""

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, tol, depth):
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        flm, frm = f(lmid), f(rmid)
        left = simpson(lo, mid, flo, flm, fmid)
        right = simpson(mid, hi, fmid, frm, fhi)
        err = left + right - whole
        if (
            depth <= 0
            or not np.isfinite(err)
            or abs(err) <= 15.0 * tol * max(1.0, abs(whole))
        ):
            return left + right + err / 15.0
        return recurse(lo, mid, flo, flm, fmid, left, tol / 2.0, depth - 1) + recurse(
            mid, hi, fmid, frm, fhi, right, tol / 2.0, depth - 1
        )

    if b <= a:
        return 0.0
    mid = 0.5 * (a + b)
    fa, fm, fb = f(a), f(mid), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, rel_tol, 30)


def custom(
    phi: Callable,
    phi_prime: Callable,
    ell: float,
    m: float,
    Phi: Optional[Callable] = None,
    phi_second: Optional[Callable] = None,
) -> GrowthLaw:
    """Wrap user-supplied callables; Phi defaults to quadrature of s*phi(s)."""
    if Phi is None:
        cache: dict[float, float] = {}

        def _Phi_scalar(t: float) -> float:
            # integrate s*phi(s) in log s; the missed head below 40 e-folds
            # is O(e^{-40 ell}) relative since the integrand grows like s^ell
            t = float(abs(t))
            if t == 0.0:
                return 0.0
            if t not in cache:
                top = np.log(t)
                cache[t] = _adaptive_simpson(
                    lambda x: np.exp(2.0 * x) * float(phi(np.exp(x))),
                    top - 40.0,
                    top,
                )
            return cache[t]

        def _Phi(t):
            t = _as_array(t)
            if t.ndim == 0:
                return _Phi_scalar(float(t))
            return np.array([_Phi_scalar(x) for x in t.ravel()]).reshape(t.shape)

        Phi = _Phi
    return GrowthLaw(
        kind="custom",
        ell=float(ell),
        m_idx=float(m),
        phi_fn=phi,
        phi_prime_fn=phi_prime,
        phi_second_fn=phi_second,
        Phi_fn=Phi,
    )


def custom_from_csv(path) -> GrowthLaw:
    """Load a tabulated law from CSV columns ``t, phi, phi_prime``.

    Monotone-cubic (PCHIP) interpolation between samples, constant-slope
    power extrapolation outside the tabulated range.  Indices are estimated
    from the sampled ratio phi*t^2/Phi.
    """
    data = np.loadtxt(path, delimiter=",", comments="#")
    if data.ndim != 2 or data.shape[1] < 3:
        raise ValueError("custom law CSV needs columns t, phi, phi_prime")
    t, ph, dph = data[:, 0], data[:, 1], data[:, 2]
    order = np.argsort(t)
    t, ph, dph = t[order], ph[order], dph[order]
    if t[0] <= 0:
        raise ValueError("tabulated t values must be positive")
    # interpolate in log t so power-like laws are reproduced well; beyond the
    # tabulated range extend with the endpoint slope (power-law continuation)
    lt, lphv = np.log(t), np.log(ph)
    lph = PchipInterpolator(lt, lphv, extrapolate=False)
    dph_i = PchipInterpolator(lt, dph, extrapolate=False)
    slope_lo = float(lph.derivative()(lt[0]))
    slope_hi = float(lph.derivative()(lt[-1]))

    def phi(x):
        lx = np.log(np.asarray(x, dtype=float))
        out = lph(np.clip(lx, lt[0], lt[-1]))
        out = np.where(lx < lt[0], lphv[0] + slope_lo * (lx - lt[0]), out)
        out = np.where(lx > lt[-1], lphv[-1] + slope_hi * (lx - lt[-1]), out)
        return np.exp(out)

    def phi_prime(x):
        lx = np.log(np.asarray(x, dtype=float))
        return dph_i(np.clip(lx, lt[0], lt[-1]))

    law = custom(phi, phi_prime, ell=2.0, m=2.0)
    # index scan with a single vectorized cumulative pass (quadrature error
    # ~1e-5, ample for index estimation; law.Phi stays adaptive)
    grid = np.geomspace(t[0], t[-1], 200)
    xs = np.linspace(lt[0] - 40.0, lt[-1], 20001)
    fx = np.exp(2.0 * xs) * phi(np.exp(xs))
    F = np.concatenate([[0.0], np.cumsum(0.5 * (fx[1:] + fx[:-1]) * np.diff(xs))])
    Phi_grid = np.interp(np.log(grid), xs, F)
    ratio = law.phi_tt(grid) / Phi_grid
    return GrowthLaw(
        kind="custom",
        ell=float(ratio.min()),
        m_idx=float(ratio.max()),
        phi_fn=phi,
        phi_prime_fn=phi_prime,
        Phi_fn=law.Phi_fn,
    )


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def eval_law(law: GrowthLaw, t: float) -> tuple[float, float, float]:
    """Return (Phi(t), phi(t), phi'(t)) at a single t > 0."""
    if t <= 0:
        raise NonPositiveInput(f"eval_law needs t > 0, got {t}")
    return float(law.Phi(t)), float(law.phi(t)), float(law.phi_prime(t))


def growth_indices(
    law: GrowthLaw, sample_grid=None, tol: float = 1e-8
) -> tuple[float, float]:
    """Sampled (inf, sup) of phi(t)*t^2 / Phi(t).

    Raises IndexViolation when the declared (ell, m) are inconsistent with
    the sampled ratio beyond ``tol``.
    """
    if sample_grid is None:
        sample_grid = np.geomspace(1e-4, 1e4, 200)
    grid = _as_array(sample_grid)
    ratio = law.phi_tt(grid) / law.Phi(grid)
    lhat, mhat = float(ratio.min()), float(ratio.max())
    if lhat < law.ell - tol * max(1.0, abs(law.ell)):
        raise IndexViolation(
            f"sampled lower index {lhat} < declared ell {law.ell}"
        )
    if mhat > law.m_idx + tol * max(1.0, abs(law.m_idx)):
        raise IndexViolation(
            f"sampled upper index {mhat} > declared m {law.m_idx}"
        )
    return lhat, mhat


def xi_bounds(t: float, ell: float, m: float):
    """(min(t^ell, t^m), max(t^ell, t^m)) — Delta_2 comparison exponents."""
    t = _as_array(t)
    lo = np.minimum(t**ell, t**m)
    hi = np.maximum(t**ell, t**m)
    if t.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


@dataclass
class HypothesisReport:
    """Boolean verdict per structural hypothesis, with sampled witnesses."""

    regularity: bool
    monotonicity: bool
    index_bounds: bool
    embedding: bool
    doubling: bool
    ordering: bool
    product: bool
    details: dict

    @property
    def all_pass(self) -> bool:
        return all(
            (self.regularity, self.monotonicity, self.index_bounds, self.embedding, self.doubling,
             self.ordering, self.product)
        )

    def lines(self) -> list[str]:
        out = []
        for name in ("regularity", "monotonicity", "index_bounds", "embedding", "doubling", "ordering", "product"):
            ok = getattr(self, name)
            suffix = ""
            if not ok and name in self.details:
                suffix = f"  [{self.details[name]}]"
            out.append(f"{name:<9} {'pass' if ok else 'FAIL'}{suffix}")
        return out


def check_hypotheses(law: GrowthLaw, s: float, N: int, q: float, p: float) -> HypothesisReport:
    """Validate the structural hypotheses for given (s, N, q, p).

    Failures are reported, never raised.  Checks are sampled proxies for
    the continuum statements: limits at 0/inf are probed at 1e-8 and 1e8,
    monotonicity on a 6-decade log grid, the embedding integral split at 1.
    """
    if not (0 < s <= 1):
        raise ValueError("fractional order s must lie in (0, 1]")
    if N not in (1, 2):
        raise ValueError("dimension N must be 1 or 2")
    details: dict = {}
    grid = np.geomspace(1e-4, 1e4, 200)

    # (regularity): phi > 0 and C^1 on samples, t*phi(t) -> 0 / +inf
    phv = law.phi(grid)
    dph = law.phi_prime(grid)
    ref = law.phi_t(1.0)
    lim0 = law.phi_t(1e-8) / ref
    liminf = law.phi_t(1e8) / ref
    regularity = bool(
        np.all(np.isfinite(phv)) and np.all(phv > 0) and np.all(np.isfinite(dph))
        and lim0 < 1e-4 and liminf > 1e4
    )
    if not regularity:
        details["regularity"] = f"t*phi near 0 -> {lim0:.3g}, near inf -> {liminf:.3g}"

    # (monotonicity): t*phi(t) strictly increasing
    tphi = law.phi_t(grid)
    gaps = np.diff(tphi)
    monotonicity = bool(np.all(gaps > -MONOTONE_SLACK * np.maximum(1.0, np.abs(tphi[:-1]))))
    if not monotonicity:
        details["monotonicity"] = f"min increment {gaps.min():.3g}"

    # (index_bounds) via the integrated form: (ell-1)*phi*t <= t*(phi*t)' <= (m-1)*phi*t
    mid = law.phi_t(grid) + law.dphi_tt(grid)
    lo = (law.ell - 1.0) * tphi
    hi = (law.m_idx - 1.0) * tphi
    slack = MONOTONE_SLACK * np.maximum(1.0, np.abs(mid))
    index_bounds = bool(np.all(mid >= lo - slack) and np.all(mid <= hi + slack))
    if not index_bounds:
        details["index_bounds"] = "sampled growth-envelope sandwich violated"

    # Delta_2 via the index ratio
    ratio = law.phi_tt(grid) / law.Phi(grid)
    doubling = bool(
        ratio.min() >= law.ell - 1e-9 and ratio.max() <= law.m_idx + 1e-9
        and law.ell > 1.0
    )
    if not doubling:
        details["doubling"] = f"ratio range ({ratio.min():.6g}, {ratio.max():.6g})"

    # (embedding): integral near 0 converges, integral on (1, T) diverges
    expo = s / (N - s) if N > s else None
    if expo is None:
        embedding = False
        details["embedding"] = "N <= s"
    else:
        def integrand(t):
            return (t / law.Phi(t)) ** expo

        def log_integrand(x):
            t = np.exp(x)
            return integrand(t) * t

        # integrate in log t: the near-0 singularity becomes a benign decay
        head = [
            quad(log_integrand, np.log(eps), 0.0, limit=200)[0]
            for eps in (1e-4, 1e-6, 1e-8)
        ]
        # increments shrink geometrically per decade iff the singularity at 0
        # is integrable; they stagnate (log) or grow (power) otherwise
        inc1 = head[1] - head[0]
        inc2 = head[2] - head[1]
        converges = bool(
            np.all(np.isfinite(head))
            and (inc2 <= 0.7 * inc1 + 1e-12 * max(1.0, abs(head[2])))
        )
        tail_grid = np.geomspace(1.0, 1e8, 2000)
        tail_vals = integrand(tail_grid)
        tail = float(np.trapezoid(tail_vals, tail_grid))
        mid = float(np.trapezoid(tail_vals[tail_grid <= 1e4], tail_grid[tail_grid <= 1e4]))
        # primary rule: mass > 1e3 by T = 1e8; fallback: the integral is
        # still growing by decades (copes with slowly divergent tails)
        diverges = tail > 1e3 or tail >= 1.8 * mid
        embedding = bool(converges and diverges)
        if not embedding:
            details["embedding"] = (
                f"head -> {head[-1]:.4g}, tail(1,1e8) = {tail:.4g}, "
                f"tail(1,1e4) = {mid:.4g}"
            )

    # exponent ordering and the product inequality
    if N - s * law.ell > 0:
        ell_star = N * law.ell / (N - s * law.ell)
    else:
        ell_star = np.inf
    ordering = bool(
        law.ell <= law.m_idx < q < p and np.isfinite(ell_star) and p < ell_star
    )
    if not ordering:
        details["ordering"] = (
            f"need ell<=m<q<p<ell_s* : ({law.ell}, {law.m_idx}, {q}, {p}, {ell_star:.6g})"
        )
    product = bool(law.m_idx * (q - law.ell) < p * (q - law.m_idx))
    if not product:
        details["product"] = (
            f"m(q-ell) = {law.m_idx * (q - law.ell):.6g} >= "
            f"p(q-m) = {p * (q - law.m_idx):.6g}"
        )

    details["ell_star"] = ell_star
    return HypothesisReport(regularity, monotonicity, index_bounds, embedding, doubling, ordering, product, details)


def conjugate(law: GrowthLaw, t: float) -> float:
    """Legendre conjugate value max_{s>=0} (t*s - Phi(s)) at a single t >= 0."""
    if t < 0:
        raise NonPositiveInput("conjugate is evaluated for t >= 0")
    if t == 0.0:
        return 0.0

    def resid(x):
        return law.phi_t(x) - t

    lo = hi = 1.0
    for _ in range(300):
        if resid(lo) <= 0:
            break
        lo /= 4.0
    else:
        raise BracketFailure("could not bracket s*phi(s) = t from below")
    for _ in range(300):
        if resid(hi) >= 0:
            break
        hi *= 4.0
    else:
        raise BracketFailure("could not bracket s*phi(s) = t from above")
    star = brentq(resid, lo, hi, xtol=1e-300, rtol=1e-15)
    return float(t * star - law.Phi(star))


@dataclass
class ConjugateLaw:
    """Legendre conjugate of a growth law, evaluated pointwise."""

    base: GrowthLaw

    def eval(self, t):
        t = _as_array(t)
        if t.ndim == 0:
            return conjugate(self.base, float(t))
        return np.array([conjugate(self.base, float(x)) for x in t.ravel()]).reshape(t.shape)


@dataclass
class SobolevConjugate:
    """Critical Sobolev N-function Phi_* = Phi o H^{-1} with its indices."""

    H: Callable
    H_inv: Callable
    Phi_star: Callable
    ell_star: float
    m_star: float
    index_range: tuple[float, float]


def sobolev_conjugate(law: GrowthLaw, s: float, N: int) -> SobolevConjugate:
    """Build the critical function Phi_* and verify its index bounds.

    Raises CriticalExponentUndefined when N - s*m <= 0.
    """
    if N - s * law.m_idx <= 0:
        raise CriticalExponentUndefined(
            f"N - s*m = {N - s * law.m_idx:.6g} <= 0"
        )
    expo = s / (N - s)
    power_out = (N - s) / N

    def integrand(t):
        return (t / law.Phi(t)) ** expo

    cache: dict[float, float] = {}

    def G(t: float) -> float:
        t = float(t)
        if t == 0.0:
            return 0.0
        if t not in cache:
            cache[t] = quad(integrand, 0.0, t, limit=200)[0]
        return cache[t]

    def H(t):
        t = _as_array(t)
        if t.ndim == 0:
            return G(float(t)) ** power_out
        return np.array([G(float(x)) ** power_out for x in t.ravel()]).reshape(t.shape)

    def H_inv(y: float) -> float:
        y = float(y)
        if y == 0.0:
            return 0.0
        lo, hi = 1.0, 1.0
        for _ in range(300):
            if H(lo) <= y:
                break
            lo /= 4.0
        else:
            raise BracketFailure("H_inv: lower bracket")
        for _ in range(300):
            if H(hi) >= y:
                break
            hi *= 4.0
        else:
            raise BracketFailure("H_inv: upper bracket")
        return brentq(lambda x: H(x) - y, lo, hi, xtol=1e-300, rtol=1e-14)

    def Phi_star(t):
        t = _as_array(t)
        if t.ndim == 0:
            return float(law.Phi(H_inv(float(np.abs(t)))))
        return np.array([law.Phi(H_inv(abs(float(x)))) for x in t.ravel()]).reshape(t.shape)

    ell_star = N * law.ell / (N - s * law.ell)
    m_star = N * law.m_idx / (N - s * law.m_idx)

    # sampled index ratio t*Phi_*'(t)/Phi_*(t) via the chain rule
    samples = np.geomspace(1e-2, 1e2, 25)
    ratios = []
    for t in samples:
        u = H_inv(t)
        dH = power_out * G(u) ** (power_out - 1.0) * integrand(u)
        ratios.append(t * law.phi_t(u) / dH / law.Phi(u))
    index_range = (float(np.min(ratios)), float(np.max(ratios)))
    return SobolevConjugate(H, H_inv, Phi_star, ell_star, m_star, index_range)
