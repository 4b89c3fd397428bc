"""Constrained minimization over the Nehari branches.

The branch solves iterate a gradient step on the energy followed by a
fibering re-projection onto the chosen root t_mu^-(u) or t_mu^+(u); the
branches are natural constraints, so converged iterates are (discrete)
critical points of the free energy and the full-basis residual is the
convergence certificate.  Nonexistence below mu_n and the degenerate
continuation toward mu_n are driven by the same machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Field
from .functionals import (
    ProblemData,
    energy,
    energy_gradient,
    energy_second_diag,
    luxemburg_norm,
    q_term,
)
from .fibering import (
    Ray,
    ZeroDenominator,
    classification_band,
    fibering_t,
    nehari_roots,
)
from .extremal import lambda_n

__all__ = [
    "SolutionReport",
    "Certificate",
    "NoAdmissibleSeed",
    "InvalidRegime",
    "ContinuationStall",
    "minimize_branch",
    "residual",
    "sign_diagnostics",
    "nonexistence_check",
    "degenerate_continuation",
    "lambda_star_diagnostic",
    "d_mu_bound",
    "c_mu_bound",
    "asymptotic_sweep",
]

MAX_OUTER = 2000
ENERGY_DECREASE_TOL = 1e-11
RESID_TOL_FACTOR = 1e-6
NORM_GUARD = 1e6


class NoAdmissibleSeed(RuntimeError):
    """Every seed has Lambda_n(u) >= mu and rescue failed."""


class InvalidRegime(ValueError):
    """The operation was called outside its mu-regime."""


class ContinuationStall(RuntimeError):
    """Iterates diverged in norm (coercivity guard tripped)."""


def residual(u: Field, pd: ProblemData) -> float:
    """max_k |I'(u) e_k| / ||e_k|| over the full coordinate basis."""
    if not np.any(u.values):
        return 0.0
    grad = energy_gradient(u, pd)
    return float(np.max(np.abs(grad) / pd.lux_basis_norms()))


def witnessed_embedding_value(pd: ProblemData, r: float, u: Optional[Field]) -> float:
    """Shared S_r estimate raised by one local witness, without mutation.

    Keeps parallel cells order-independent: each cell sees the lazily
    computed shared estimate plus its own solution's ratio only.
    """
    value = pd.embedding(r).value
    if u is not None and np.any(u.values):
        from .grid import lp_norm

        lux = luxemburg_norm(u, pd)
        if lux > 0:
            value = max(value, lp_norm(u, r) / lux)
    return value


def c_mu_bound(pd: ProblemData, witness: Optional[Field] = None) -> float:
    """Norm floor for Nehari points with the discrete S_q estimate."""
    ell, m, q = pd.law.ell, pd.law.m_idx, pd.q
    if pd.mu <= 0:
        return np.inf
    Sq = witnessed_embedding_value(pd, q, witness)
    base = ell / (pd.mu * Sq**q * pd.pots.a_inf_norm)
    return float(min(base ** (1.0 / (q - ell)), base ** (1.0 / (q - m))))


def d_mu_bound(pd: ProblemData, witness: Optional[Field] = None) -> float:
    """Energy floor on the minus branch: prefactor * min(c_mu^ell, c_mu^m)."""
    ell, m, q, p = pd.law.ell, pd.law.m_idx, pd.q, pd.p
    c = c_mu_bound(pd, witness)
    pref = (p * (q - m) - m * (q - ell)) / (p * q)
    return float(pref * min(c**ell, c**m))


@dataclass
class Certificate:
    """Post-hoc bound checks attached to a report."""

    name: str
    value: float
    bound: float
    satisfied: bool

    def row(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "bound": self.bound,
            "satisfied": self.satisfied,
        }


@dataclass
class SolutionReport:
    """Outcome of one branch solve."""

    field: Field
    branch: str  # "minus" | "plus" | "zero"
    energy: float
    residual: float
    t_projection: float
    classification_margin: float
    norm: float
    iterations: int
    converged: bool
    certificates: list[Certificate] = field(default_factory=list)

    @property
    def resid_tol(self) -> float:
        return RESID_TOL_FACTOR * (1.0 + abs(self.energy))

    def row(self) -> dict:
        return {
            "branch": self.branch,
            "energy": self.energy,
            "residual": self.residual,
            "norm": self.norm,
            "t_projection": self.t_projection,
            "classification_margin": self.classification_margin,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _project(u_vals: np.ndarray, pd: ProblemData, branch: str):
    """Nehari projection of a direction; None when the ray misses level mu."""
    u = Field(pd.grid, u_vals) if not isinstance(u_vals, Field) else u_vals
    try:
        roots = nehari_roots(u, pd)
    except (ZeroDenominator, ValueError):
        return None
    if roots.status == "empty":
        return None
    t = roots.t_minus if branch == "minus" else roots.t_plus
    w = Field(pd.grid, t * u.values)
    return w, t, roots


def _rescue(seed: Field, pd: ProblemData, anchor: Optional[Field]) -> Optional[Field]:
    """Blend an inadmissible seed toward the extremal minimizer."""
    if anchor is None:
        return None
    for theta in (0.5, 0.75, 0.9, 1.0):
        cand = Field(pd.grid, (1.0 - theta) * seed.values + theta * anchor.values)
        if not np.any(cand.values):
            continue
        try:
            if lambda_n(cand, pd) < pd.mu:
                return cand
        except (ZeroDenominator, ValueError):
            continue
    return None


def minimize_branch(
    pd: ProblemData,
    branch: str,
    seeds: list[Field],
    max_outer: int = MAX_OUTER,
    extremal_anchor: Optional[Field] = None,
) -> SolutionReport:
    """Projected-descent minimization of the energy over one Nehari branch.

    Each accepted step is a gradient step on the free energy followed by
    fibering re-projection onto the branch root; steps that leave the
    admissible cone {Lambda_n(u) < mu} are rejected by halving.
    """
    if branch not in ("minus", "plus"):
        raise ValueError("branch must be 'minus' or 'plus'")
    admissible = []
    for seed in seeds:
        if not np.any(seed.values):
            continue
        proj = _project(seed, pd, branch)
        if proj is not None:
            admissible.append((seed, proj))
            continue
        rescued = _rescue(seed, pd, extremal_anchor)
        if rescued is not None:
            proj = _project(rescued, pd, branch)
            if proj is not None:
                admissible.append((rescued, proj))
    if not admissible:
        raise NoAdmissibleSeed(
            f"no seed enters the admissible cone at mu = {pd.mu:.6g}"
        )

    best: Optional[SolutionReport] = None
    for seed, proj in admissible:
        report = _descend_branch(proj, pd, branch, max_outer)
        if best is None or report.energy < best.energy:
            best = report
    return best


def _descend_branch(proj, pd: ProblemData, branch: str, max_outer: int) -> SolutionReport:
    w, t, roots = proj
    E = energy(w, pd)
    iters = 0
    converged = False
    step = None
    for it in range(max_outer):
        iters = it + 1
        grad = energy_gradient(w, pd)
        gnorm = float(np.linalg.norm(grad))
        wnorm2 = float(np.linalg.norm(w.values))
        if wnorm2 > NORM_GUARD:
            raise ContinuationStall(f"iterate norm {wnorm2:.3g} exceeds guard")
        if gnorm == 0.0:
            converged = True
            break
        if step is None:
            step = 1e-2 * wnorm2 / gnorm
        improved = False
        for _ in range(50):
            cand_proj = _project(w.values - step * grad, pd, branch)
            if cand_proj is None:
                step *= 0.5
                continue
            wc, tc, rc = cand_proj
            Ec = energy(wc, pd)
            if Ec < E - 1e-4 * step * gnorm**2:
                drop = E - Ec
                w, t, roots, E = wc, tc, rc, Ec
                step *= 1.5
                improved = True
                break
            step *= 0.5
        res = residual(w, pd)
        tol = RESID_TOL_FACTOR * (1.0 + abs(E))
        if res < tol and (not improved or drop < ENERGY_DECREASE_TOL * (1.0 + abs(E))):
            converged = True
            break
        if not improved:
            break

    res = residual(w, pd)
    second = energy_second_diag(w, pd)
    band = classification_band(w, pd)
    label = "zero" if abs(second) <= band else ("plus" if second > 0 else "minus")
    report = SolutionReport(
        field=w,
        branch=label,
        energy=E,
        residual=res,
        t_projection=t,
        classification_margin=abs(second),
        norm=luxemburg_norm(w, pd),
        iterations=iters,
        converged=converged,
    )
    _attach_certificates(report, pd)
    return report


def _attach_certificates(report: SolutionReport, pd: ProblemData) -> None:
    # the solution itself is a legitimate witness for the embedding estimate;
    # folded locally so parallel cells stay order-independent
    c_mu = c_mu_bound(pd, witness=report.field)
    tol = 1e-9 * max(1.0, c_mu if np.isfinite(c_mu) else 1.0)
    if np.isfinite(c_mu):
        report.certificates.append(
            Certificate("c_mu_norm_floor", report.norm, c_mu,
                        bool(report.norm >= c_mu - tol))
        )
    if report.branch in ("minus", "zero"):
        d_mu = d_mu_bound(pd, witness=report.field)
        report.certificates.append(
            Certificate("d_mu_energy_floor", report.energy, d_mu,
                        bool(report.energy >= d_mu - 1e-9 * max(1.0, abs(d_mu))))
        )


def sign_diagnostics(
    pd: ProblemData,
    report: SolutionReport,
    mu_e_hat: float,
    band: Optional[float] = None,
) -> dict:
    """Compare sign(E+) against the position of mu relative to mu_e_hat.

    Returns predicted/measured labels and an agreement flag; disagreement
    signals mu_e estimation error, never an exception.
    """
    if band is None:
        band = 0.05 * mu_e_hat
    mu = pd.mu
    if abs(mu - mu_e_hat) <= band:
        predicted = "zero"
    elif mu < mu_e_hat:
        predicted = "positive"
    else:
        predicted = "negative"
    energy_band = band * q_term(report.field, pd) / pd.q
    E = report.energy
    if abs(E) <= energy_band:
        measured = "zero"
    elif E > 0:
        measured = "positive"
    else:
        measured = "negative"
    return {
        "predicted": predicted,
        "measured": measured,
        "agree": predicted == measured,
        "energy": E,
        "energy_band": energy_band,
        "mu": mu,
        "mu_e_hat": mu_e_hat,
    }


@dataclass
class NonexistenceCertificate:
    """Sampled (not proven) emptiness certificate for mu < mu_n_hat."""

    mu: float
    mu_n_hat: float
    samples: int
    min_lambda_n: float
    margin: float
    is_proof: bool = False

    def row(self) -> dict:
        return {
            "mu": self.mu,
            "mu_n_hat": self.mu_n_hat,
            "samples": self.samples,
            "min_lambda_n": self.min_lambda_n,
            "margin": self.margin,
            "is_proof": self.is_proof,
        }


def nonexistence_check(
    pd: ProblemData,
    samples: int,
    mu_n_hat: float,
    rng=None,
    extra_fields: Optional[list[Field]] = None,
) -> NonexistenceCertificate:
    """min over sampled rays of Lambda_n(u) - mu, all of which must be > 0.

    Each sample also scans an expanding log grid of t to confirm the ray
    minimum is captured by the fibering solve.
    """
    if pd.mu >= mu_n_hat:
        raise InvalidRegime(f"mu = {pd.mu:.6g} is not below mu_n_hat = {mu_n_hat:.6g}")
    rng = np.random.default_rng(rng if rng is not None else 0)
    g = pd.grid
    min_lam = np.inf
    fields = list(extra_fields) if extra_fields else []
    for k in range(samples - len(fields)):
        smooth = rng.standard_normal(g.n_nodes)
        smooth = np.convolve(smooth, np.ones(5) / 5.0, mode="same")
        fields.append(Field(g, smooth + 0.1 * rng.standard_normal(g.n_nodes)))
    for u in fields[:samples]:
        if not np.any(u.values):
            continue
        try:
            ray = Ray(u, pd)
            lam = lambda_n(u, pd, ray)
        except (ZeroDenominator, ValueError):
            continue
        if pd.mu > 0:
            # cheap scan: the fibering minimum must dominate the level mu
            tgrid = np.geomspace(1e-3, 1e3, 25) * fibering_t(u, pd, ray)
            scan = min(ray.qn(t) for t in tgrid)
            lam = min(lam, scan)
        min_lam = min(min_lam, lam)
    return NonexistenceCertificate(
        mu=pd.mu,
        mu_n_hat=mu_n_hat,
        samples=samples,
        min_lambda_n=float(min_lam),
        margin=float(min_lam - pd.mu),
    )


def lambda_star_diagnostic(pd: ProblemData, reference_energy: float) -> float:
    """Threshold below which minus-branch minimizers avoid the degenerate set.

    Evaluated verbatim with the discrete S_p estimate and a reference
    minus-branch energy at some (lambda_0, mu_0); lambda_0 enters as pd.lam.
    """
    ell, m, q, p = pd.law.ell, pd.law.m_idx, pd.q, pd.p
    Sp = pd.embedding(p).value
    pref = (p * (q - m) - m * (q - ell)) / (p * q * reference_energy)
    base = (q - m) / ((p - q) * Sp**p)
    return float(min(pref ** ((p - ell) / ell) * base,
                     pref ** ((p - m) / m) * base,
                     pd.lam))


@dataclass
class ContinuationStep:
    mu: float
    report: SolutionReport
    root_gap: float


@dataclass
class ContinuationResult:
    steps: list[ContinuationStep]
    final: SolutionReport
    final_mu: float


def degenerate_continuation(
    pd: ProblemData,
    mu_n_hat: float,
    steps: int,
    seeds: list[Field],
    extremal_anchor: Optional[Field] = None,
    target: str = "mu_to_mu_n",
    lambda_star: Optional[float] = None,
) -> ContinuationResult:
    """Warm-started minus-branch continuation toward an extremal parameter.

    target = "mu_to_mu_n": solve at mu_k = mu_n_hat (1 + 2^{-k}), k = 1..steps,
    then report the limit point: the last direction re-projected onto its own
    degenerate point t(u) u at mu = Lambda_n(u), where the two roots have
    merged and the second derivative vanishes by construction.

    target = "lambda_to_lambda_star": solve at lambda_k = lambda_star (1 - 2^{-k})
    with mu fixed at pd.mu, finishing with a solve at lambda_star itself.
    """
    if steps < 3:
        raise ValueError("need at least 3 continuation steps")
    if target not in ("mu_to_mu_n", "lambda_to_lambda_star"):
        raise ValueError("unknown continuation target")
    if target == "lambda_to_lambda_star":
        if lambda_star is None or lambda_star <= 0:
            raise ValueError("lambda_to_lambda_star needs a positive lambda_star")
        return _lambda_continuation(pd, lambda_star, steps, seeds, extremal_anchor)

    out: list[ContinuationStep] = []
    warm = list(seeds)
    prev_norm = None
    for k in range(1, steps + 1):
        mu_k = mu_n_hat * (1.0 + 2.0 ** (-k))
        pdk = pd.with_params(mu=mu_k)
        report = minimize_branch(pdk, "minus", warm, extremal_anchor=extremal_anchor)
        roots = nehari_roots(
            Field(pd.grid, report.field.values / report.t_projection), pdk
        )
        gap = (roots.t_plus - roots.t_minus) if roots.status == "two" else 0.0
        out.append(ContinuationStep(mu_k, report, float(gap)))
        if prev_norm is not None and report.norm > 10.0 * prev_norm and report.norm > 1e3:
            raise ContinuationStall("continuation iterates diverge in norm")
        prev_norm = report.norm
        warm = [report.field]

    # limit report: degenerate projection of the final direction
    u_dir = out[-1].report.field
    ray = Ray(u_dir, pd)
    t_star = fibering_t(u_dir, pd, ray)
    lam_star = ray.qn(t_star)
    pd_star = pd.with_params(mu=lam_star)
    w = Field(pd.grid, t_star * u_dir.values)
    second = energy_second_diag(w, pd_star)
    band = classification_band(w, pd_star)
    final = SolutionReport(
        field=w,
        branch="zero" if abs(second) <= band else ("plus" if second > 0 else "minus"),
        energy=energy(w, pd_star),
        residual=residual(w, pd_star),
        t_projection=1.0,
        classification_margin=abs(second),
        norm=luxemburg_norm(w, pd_star),
        iterations=sum(s.report.iterations for s in out),
        converged=all(s.report.converged for s in out),
    )
    _attach_certificates(final, pd_star)
    return ContinuationResult(steps=out, final=final, final_mu=float(lam_star))


def _lambda_continuation(pd, lambda_star, steps, seeds, anchor) -> ContinuationResult:
    out: list[ContinuationStep] = []
    warm = list(seeds)
    prev_norm = None
    lams = [lambda_star * (1.0 - 2.0 ** (-k)) for k in range(1, steps + 1)]
    lams = [l for l in lams if l > 0] + [lambda_star]
    for lam in lams:
        pdk = pd.with_params(lam=lam)
        report = minimize_branch(pdk, "minus", warm, extremal_anchor=anchor)
        roots = nehari_roots(
            Field(pd.grid, report.field.values / report.t_projection), pdk
        )
        gap = (roots.t_plus - roots.t_minus) if roots.status == "two" else 0.0
        out.append(ContinuationStep(pd.mu, report, float(gap)))
        if prev_norm is not None and report.norm > 10.0 * prev_norm and report.norm > 1e3:
            raise ContinuationStall("continuation iterates diverge in norm")
        prev_norm = report.norm
        warm = [report.field]
    return ContinuationResult(steps=out, final=out[-1].report, final_mu=float(pd.mu))


@dataclass
class SweepCell:
    lam: float
    mu: float
    mu_n_hat: float
    minus: Optional[SolutionReport]
    plus: Optional[SolutionReport]
    plus_norm_bound: float = float("nan")

    def row(self) -> dict:
        out = {"lambda": self.lam, "mu": self.mu, "mu_n_hat": self.mu_n_hat,
               "plus_norm_bound": self.plus_norm_bound}
        for name, rep in (("minus", self.minus), ("plus", self.plus)):
            if rep is None:
                out[f"energy_{name}"] = float("nan")
                out[f"norm_{name}"] = float("nan")
                out[f"resid_{name}"] = float("nan")
            else:
                out[f"energy_{name}"] = rep.energy
                out[f"norm_{name}"] = rep.norm
                out[f"resid_{name}"] = rep.residual
        return out


def plus_norm_lower_bound(pd: ProblemData, witness: Optional[Field] = None) -> float:
    """Blow-up rate floor for plus-branch norms as lambda -> 0."""
    ell, m, q, p = pd.law.ell, pd.law.m_idx, pd.q, pd.p
    Sp = witnessed_embedding_value(pd, p, witness)
    base = (q - m) / (pd.lam * (p - q) * Sp**p)
    return float(min(base ** (1.0 / (p - ell)), base ** (1.0 / (p - m))))


def asymptotic_sweep(
    pd_base: ProblemData,
    direction: str,
    values,
    seeds: Optional[list[Field]] = None,
    restarts: int = 4,
    rng=0,
    mu_multiplier: float = 1.25,
) -> list[SweepCell]:
    """Both-branch solves along one asymptotic direction.

    direction = "lambda_to_0": ``values`` are lambdas sorted descending;
    mu = mu_multiplier * mu_n_hat(lambda) keeps each cell inside the
    two-solution regime.  direction = "mu_to_inf": ``values`` are
    multipliers of mu_n_hat sorted ascending at fixed pd_base.lam.
    Each plus-branch field is folded into the S_p witness so the recorded
    norm bound is valid for it.
    """
    from .extremal import minimize_extremal

    values = list(values)
    if direction == "lambda_to_0":
        if sorted(values, reverse=True) != values or any(v <= 0 for v in values):
            raise ValueError("lambda values must be positive, sorted toward 0")
    elif direction == "mu_to_inf":
        if sorted(values) != values or any(v <= 0 for v in values):
            raise ValueError("mu multipliers must be positive, sorted ascending")
        anchor_fixed, mu_n_fixed, _, _ = minimize_extremal(
            pd_base, "n", restarts, rng, seeds=seeds
        )
    else:
        raise ValueError("direction must be 'lambda_to_0' or 'mu_to_inf'")

    out: list[SweepCell] = []
    warm_minus = list(seeds) if seeds else []
    warm_plus = list(seeds) if seeds else []
    warm_extremal: Optional[list[Field]] = list(seeds) if seeds else None
    anchor: Optional[Field] = None
    for v in values:
        if direction == "lambda_to_0":
            pd_l = pd_base.with_params(lam=v)
            u_star, mu_n_hat, _, _ = minimize_extremal(
                pd_l, "n", restarts, rng, seeds=warm_extremal
            )
            warm_extremal = [u_star]
            anchor = u_star
            lam, mu = v, mu_multiplier * mu_n_hat
        else:
            lam, mu = pd_base.lam, v * mu_n_fixed
            mu_n_hat = mu_n_fixed
            anchor = anchor_fixed
        pd = pd_base.with_params(lam=lam, mu=mu)
        minus = minimize_branch(pd, "minus", warm_minus + ([anchor] if anchor else []),
                                extremal_anchor=anchor)
        plus = minimize_branch(pd, "plus", warm_plus + ([anchor] if anchor else []),
                               extremal_anchor=anchor)
        cell = SweepCell(lam, mu, mu_n_hat, minus, plus,
                         plus_norm_bound=plus_norm_lower_bound(pd, witness=plus.field))
        warm_minus = [minus.field]
        warm_plus = [plus.field]
        out.append(cell)
    return out
