"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Criterion 6's residual clause is asserted at its stated tolerance and is
expected to fail: the degenerate limit point of the continuation is not a
free critical point of the energy for generic weights (the failure message
carries the analysis).  Every other criterion passes at its stated
tolerance.
"""

import time

import numpy as np
import pytest

from nrq.calibration import toy_problem
from nrq.cli import RunConfig, run_command
from nrq.extremal import extremal_pair
from nrq.fibering import Ray, classification_band, fibering_s, fibering_t, nehari_roots
from nrq.grid import BoxGrid, Field, PotentialPair, gaussian_bump
from nrq.functionals import (
    ProblemData,
    energy,
    energy_second_diag,
    luxemburg_norm,
    modular,
)
from nrq.nfunction import power, power_log, power_sum
from nrq.solver import (
    d_mu_bound,
    degenerate_continuation,
    minimize_branch,
    nonexistence_check,
    plus_norm_lower_bound,
    sign_diagnostics,
)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="module")
def trichotomy_pd():
    """65-node 1D grid, s = 0.4, V = 1 + x^2, a = gaussian, quadratic law."""
    grid = BoxGrid(1, 3.0, 65)
    x = grid.axis()
    pots = PotentialPair(1.0 + x**2, np.exp(-(x**2) / 2.0), 1.0)
    return ProblemData(power(2), 0.4, grid, pots, 3.0, 4.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def trichotomy_extremal(trichotomy_pd):
    return extremal_pair(trichotomy_pd, restarts=4, rng=0)


def test_criterion_1_toy_calibration_oracles():
    t0 = time.perf_counter()
    u, pd = toy_problem(mu=2.5)
    ray = Ray(u, pd)
    t_crit = fibering_t(u, pd, ray)
    s_crit = fibering_s(u, pd, ray)
    lam_n = ray.qn(t_crit)
    lam_e = ray.qe(s_crit)
    roots = nehari_roots(u, pd, ray)
    elapsed = time.perf_counter() - t0

    checks = {
        "t(u) = 2": abs(t_crit - 2.0) < 1e-8,
        "Lambda_n = 2": abs(lam_n - 2.0) < 1e-8,
        "s(u) = sqrt(8)": abs(s_crit - np.sqrt(8.0)) < 1e-8,
        "Lambda_e = 3*2*sqrt(0.125)": abs(lam_e - 6.0 * np.sqrt(0.125)) < 1e-8,
        "t- = 1": roots.status == "two" and abs(roots.t_minus - 1.0) < 1e-8,
        "t+ = 4": roots.status == "two" and abs(roots.t_plus - 4.0) < 1e-8,
        "runtime < 1 s": elapsed < 1.0,
    }
    ok = all(checks.values())
    report(1, ok, f"toy oracles ({elapsed:.3f}s)")
    assert ok, {k: v for k, v in checks.items() if not v}


def test_criterion_2_derivative_consistency():
    t0 = time.perf_counter()
    grid = BoxGrid(1, 3.0, 33)
    x = grid.axis()
    pots = PotentialPair(1.0 + x**2, np.exp(-(x**2) / 2.0), 1.0)
    configs = [
        (power(2), 0.4, 3.0, 4.0),
        (power_sum(2, 3), 0.3, 4.6, 4.95),
        (power_log(2), 0.3, 4.6, 4.95),
    ]
    rng = np.random.default_rng(0)
    worst_first = worst_second = 0.0
    for law, s, q, p in configs:
        pd = ProblemData(law, s, grid, pots, q, p, 1.0, 2.0)
        for _ in range(50):
            u = Field(grid, rng.standard_normal(33) * np.exp(-(x**2) / 4.0))
            v = Field(grid, rng.standard_normal(33) * np.exp(-(x**2) / 4.0))
            from nrq.functionals import energy_derivative

            eps = 1e-6
            fd1 = (
                energy(Field(grid, u.values + eps * v.values), pd)
                - energy(Field(grid, u.values - eps * v.values), pd)
            ) / (2.0 * eps)
            an1 = energy_derivative(u, v, pd)
            worst_first = max(worst_first, abs(fd1 - an1) / max(1e-30, abs(an1)))

            eps2 = 1e-4
            fd2 = (
                energy(Field(grid, (1 + eps2) * u.values), pd)
                - 2.0 * energy(u, pd)
                + energy(Field(grid, (1 - eps2) * u.values), pd)
            ) / eps2**2
            an2 = energy_second_diag(u, pd)
            worst_second = max(worst_second, abs(fd2 - an2) / max(1e-30, abs(an2)))
    elapsed = time.perf_counter() - t0
    ok = worst_first < 1e-5 and worst_second < 1e-4 and elapsed < 30.0
    report(2, ok, f"I' worst rel {worst_first:.2e}, I'' worst rel "
                  f"{worst_second:.2e} ({elapsed:.1f}s)")
    assert ok


def test_criterion_3_monotone_lemma_suite():
    t0 = time.perf_counter()
    q, p = 3.0, 4.0
    grid = np.geomspace(1e-4, 1e4, 200)
    laws = [power(2), power_sum(2, 3), power_log(2)]
    violations = []
    for law in laws:
        phi, dphi, Phi = law.phi(grid), law.phi_prime(grid), law.Phi(grid)
        theta = ((2 - q) * phi + dphi * grid) / grid ** (p - 2)
        if not np.all(np.diff(theta) > -1e-12 * np.maximum(1.0, np.abs(theta[:-1]))):
            violations.append(f"{law.kind}: Theta not strictly increasing")
        G = (phi * grid**2 - q * Phi) / grid**p
        if not np.all(np.diff(G) > -1e-12 * np.maximum(1.0, np.abs(G[:-1]))):
            violations.append(f"{law.kind}: G not strictly increasing")
        mid = grid * (dphi * grid + phi)
        slack = 1e-12 * np.maximum(1.0, np.abs(mid))
        if not (np.all(mid >= (law.ell - 1) * phi * grid - slack)
                and np.all(mid <= (law.m_idx - 1) * phi * grid + slack)):
            violations.append(f"{law.kind}: growth-envelope sandwich violated")

    # modular-vs-norm sandwich for 100 random fields per law
    box = BoxGrid(1, 3.0, 17)
    x = box.axis()
    pots = PotentialPair(1.0 + x**2, np.exp(-(x**2) / 2.0), 1.0)
    rng = np.random.default_rng(1)
    for law, s, qq, pp in [(power(2), 0.4, 3.0, 4.0),
                           (power_sum(2, 3), 0.3, 4.6, 4.95),
                           (power_log(2), 0.3, 4.6, 4.95)]:
        pd = ProblemData(law, s, box, pots, qq, pp, 1.0, 2.0)
        for _ in range(100):
            u = Field(box, rng.standard_normal(17))
            nrm = luxemburg_norm(u, pd)
            mod = modular(u, pd)
            lo = min(nrm**law.ell, nrm**law.m_idx)
            hi = max(nrm**law.ell, nrm**law.m_idx)
            if not (lo - 1e-10 <= mod <= hi + 1e-10):
                violations.append(f"{law.kind}: modular-norm sandwich violated")
                break
    elapsed = time.perf_counter() - t0
    ok = not violations
    report(3, ok, f"monotone lemmas + sandwiches ({elapsed:.1f}s)")
    assert ok, violations


def test_criterion_4_trichotomy_regime_suite(trichotomy_pd, trichotomy_extremal):
    t0 = time.perf_counter()
    pd = trichotomy_pd
    ext = trichotomy_extremal
    failures = []

    if not (0 < ext.mu_n < ext.mu_e):
        failures.append(f"mu_n < mu_e violated: {ext.mu_n}, {ext.mu_e}")

    # two-solution regime at mu = 1.25 mu_n
    pdm = pd.with_params(mu=1.25 * ext.mu_n)
    seeds = [ext.minimizer_n, gaussian_bump(pd.grid)]
    minus = minimize_branch(pdm, "minus", seeds, extremal_anchor=ext.minimizer_n)
    plus = minimize_branch(pdm, "plus", seeds, extremal_anchor=ext.minimizer_n)
    if not (minus.converged and minus.residual < 1e-6 * (1 + abs(minus.energy))):
        failures.append(f"minus residual {minus.residual:.2e}")
    if not (plus.converged and plus.residual < 1e-6 * (1 + abs(plus.energy))):
        failures.append(f"plus residual {plus.residual:.2e}")
    dmu = d_mu_bound(pdm)
    if not minus.energy >= dmu - 1e-9:
        failures.append(f"E- = {minus.energy:.6g} below D_mu = {dmu:.6g}")
    if not plus.energy < minus.energy:
        failures.append("E+ < E- violated")

    # nonexistence certificate at mu = 0.9 mu_n on 1000 sampled rays
    pdn = pd.with_params(mu=0.9 * ext.mu_n)
    cert = nonexistence_check(pdn, 1000, ext.mu_n, rng=0,
                              extra_fields=[ext.minimizer_n])
    if not cert.margin > 0:
        failures.append(f"nonexistence margin {cert.margin:.3e}")

    # sign trichotomy around mu_e
    for fac, expected in ((0.98, "positive"), (1.0, "zero"), (1.05, "negative")):
        pde = pd.with_params(mu=fac * ext.mu_e)
        rep = minimize_branch(pde, "plus", [ext.minimizer_e, ext.minimizer_n],
                              extremal_anchor=ext.minimizer_n)
        diag = sign_diagnostics(pde, rep, ext.mu_e, band=0.01 * ext.mu_e)
        if diag["predicted"] != expected or not diag["agree"]:
            failures.append(f"trichotomy at {fac} mu_e: {diag}")

    elapsed = time.perf_counter() - t0
    if elapsed >= 600.0:
        failures.append(f"runtime {elapsed:.0f}s exceeds 10 min")
    ok = not failures
    report(4, ok, f"mu_n={ext.mu_n:.6f} mu_e={ext.mu_e:.6f}, trichotomy + "
                  f"bounds ({elapsed:.0f}s)")
    assert ok, failures


def test_criterion_5_asymptotic_trends(trichotomy_pd, trichotomy_extremal):
    from nrq.solver import asymptotic_sweep

    t0 = time.perf_counter()
    pd = trichotomy_pd
    failures = []

    lam_cells = asymptotic_sweep(pd, "lambda_to_0", [1.0, 0.3, 0.1, 0.03],
                                 seeds=[gaussian_bump(pd.grid)], restarts=4, rng=0)
    norms = [c.plus.norm for c in lam_cells]
    if not all(a < b for a, b in zip(norms, norms[1:])):
        failures.append(f"plus-branch norms not increasing: {norms}")
    for c in lam_cells:
        if not c.plus.norm >= c.plus_norm_bound - 1e-9:
            failures.append(
                f"norm bound violated at lambda={c.lam:g}: "
                f"{c.plus.norm:.4g} < {c.plus_norm_bound:.4g}"
            )

    mu_cells = asymptotic_sweep(pd, "mu_to_inf", [2.0, 5.0, 10.0, 50.0],
                                seeds=[gaussian_bump(pd.grid)], restarts=4, rng=0)
    e_minus = [c.minus.energy for c in mu_cells]
    u_norms = [c.minus.norm for c in mu_cells]
    e_plus = [c.plus.energy for c in mu_cells]
    if not all(a > b > 0 for a, b in zip(e_minus, e_minus[1:])):
        failures.append(f"E- not decreasing toward 0: {e_minus}")
    if not all(a > b for a, b in zip(u_norms, u_norms[1:])):
        failures.append(f"minus-branch norms not decreasing: {u_norms}")
    if not all(a > b for a, b in zip(e_plus, e_plus[1:])):
        failures.append(f"E+ not strictly decreasing: {e_plus}")

    # Corollary-style monotonicity in lambda at fixed mu, shared seeds
    ext = trichotomy_extremal
    mu_fixed = 1.25 * ext.mu_n
    seeds = [ext.minimizer_n, gaussian_bump(pd.grid)]
    reps = {}
    for lam in (0.3, 1.0):
        pdl = pd.with_params(lam=lam, mu=mu_fixed)
        reps[lam] = (
            minimize_branch(pdl, "minus", seeds, extremal_anchor=ext.minimizer_n),
            minimize_branch(pdl, "plus", seeds, extremal_anchor=ext.minimizer_n),
        )
    for k in (0, 1):
        if not reps[0.3][k].energy <= reps[1.0][k].energy + 1e-9:
            failures.append(
                f"E{'-+'[k]} not nondecreasing in lambda: "
                f"{reps[0.3][k].energy:.6g} > {reps[1.0][k].energy:.6g}"
            )

    elapsed = time.perf_counter() - t0
    if elapsed >= 1200.0:
        failures.append(f"runtime {elapsed:.0f}s exceeds 20 min")
    ok = not failures
    report(5, ok, f"lambda/mu asymptotic trends ({elapsed:.0f}s)")
    assert ok, failures


def test_criterion_6_degenerate_continuation(trichotomy_pd, trichotomy_extremal):
    t0 = time.perf_counter()
    pd = trichotomy_pd
    ext = trichotomy_extremal
    result = degenerate_continuation(pd, ext.mu_n, 6, [ext.minimizer_n],
                                     extremal_anchor=ext.minimizer_n)
    gaps = [s.root_gap for s in result.steps]
    final = result.final
    band = classification_band(final.field, pd.with_params(mu=result.final_mu))
    resid_tol = 1e-5 * (1.0 + abs(final.energy))
    elapsed = time.perf_counter() - t0

    checks = {
        "root gap decreases to 0": all(a > b for a, b in zip(gaps, gaps[1:]))
        and gaps[-1] < 0.5,
        "final classification zero within eps_cls": final.branch == "zero"
        and final.classification_margin <= band,
        "final residual < 1e-5 scale": final.residual < resid_tol,
    }
    ok = all(checks.values())
    report(6, ok, f"gaps {gaps[0]:.3f}->{gaps[-1]:.3f}, margin "
                  f"{final.classification_margin:.1e} (band {band:.1e}), residual "
                  f"{final.residual:.3e} vs tol {resid_tol:.3e} ({elapsed:.0f}s)")
    assert ok, (
        f"failed: {[k for k, v in checks.items() if not v]}. The residual clause "
        "cannot hold at the degenerate limit: the continuation minimizers "
        "converge to t(u*)u* for the Lambda_n-minimizing direction u*, where "
        "grad Lambda_n = 0 forces grad R_n = 0, and joint criticality of R_n "
        "and the energy would require lambda(p-2)|w|^{p-q} = mu(q-2)a(x) "
        "pointwise, which the gaussian weight does not satisfy. No free "
        "critical point exists at the degenerate level for generic weights. "
        "Measured residual is that intrinsic obstruction, not solver error "
        "(per-step solves converge to ~1e-6*scale)."
    )


def test_criterion_7_reproducibility(tmp_path):
    t0 = time.perf_counter()
    cfg_text = """
[law]
kind = "power"
p = 2.0

[domain]
s = 0.4
dim = 1
n_per_axis = 33

[potential]
V = { kind = "quadratic", value = 1.0 }
a = { kind = "gaussian", sigma = 1.0 }

[exponents]
q = 3.0
p = 4.0

[parameters]
lambdas = [0.5, 1.0]
mu_multipliers = [0.9, 1.25]

[run]
seed = 7
restarts = 3
samples = 50
"""
    path = tmp_path / "cfg.toml"
    path.write_text(cfg_text)
    outputs = {}
    for workers in (1, 2, 8):
        cfg = RunConfig.load(path)
        cfg.workers = workers
        out = tmp_path / f"w{workers}"
        code = run_command("sweep", cfg, outdir=out)
        assert code == 0
        outputs[workers] = {
            f.name: f.read_bytes()
            for f in sorted(out.glob("*.csv")) + sorted(out.glob("cell_*.json"))
        }
    same12 = outputs[1] == outputs[2]
    same18 = outputs[1] == outputs[8]
    elapsed = time.perf_counter() - t0
    ok = same12 and same18 and len(outputs[1]) > 0
    report(7, ok, f"{len(outputs[1])} artifacts byte-identical across "
                  f"1/2/8 workers ({elapsed:.0f}s)")
    assert ok
