import numpy as np
import pytest

from nrq.calibration import toy_problem
from nrq.fibering import (
    NotOnNehari,
    Ray,
    ZeroDenominator,
    build_profile,
    classify,
    fibering_s,
    fibering_second,
    fibering_t,
    nehari_roots,
    rayleigh_e,
    rayleigh_n,
)
from nrq.grid import Field, gaussian_bump
from nrq.functionals import energy_derivative, luxemburg_norm
from nrq.nfunction import custom

from conftest import make_problem

SQRT8 = np.sqrt(8.0)
LAM_E_TOY = 3.0 * 2.0 * np.sqrt(0.125)


@pytest.fixture(scope="module")
def toy():
    return toy_problem(mu=2.5)


class TestRayleighQuotients:
    def test_toy_values(self, toy):
        u, pd = toy
        assert rayleigh_n(u, pd) == pytest.approx(2.5, abs=1e-10)
        assert rayleigh_e(u, pd) == pytest.approx(3.0 * (1.0 + 0.125), abs=1e-10)

    def test_level_matches_nehari(self, toy):
        # setting mu := R_n(u) makes I'(u)u = 0
        u, pd = toy
        pd_on = pd.with_params(mu=rayleigh_n(u, pd))
        assert energy_derivative(u, u, pd_on) == pytest.approx(0.0, abs=1e-12)

    def test_zero_denominator(self, toy):
        u, pd = toy
        z = Field(pd.grid, np.zeros(pd.grid.n_nodes))
        with pytest.raises((ZeroDenominator, ValueError)):
            rayleigh_n(z, pd)


class TestFiberingT:
    def test_toy_critical_point(self, toy):
        u, pd = toy
        t = fibering_t(u, pd)
        assert t == pytest.approx(2.0, abs=1e-8)
        ray = Ray(u, pd)
        assert ray.qn(t) == pytest.approx(2.0, abs=1e-8)
        # derivative vanishes at the returned point
        assert abs(ray.dqn(t)) <= 1e-9 * abs(ray.qn(t))

    def test_closed_form_oracle(self, toy):
        # homogeneous law: t = ((q-l) A / (lam (p-q) B))^{1/(p-l)}
        u, pd = toy
        A, B = 2.0, 0.5
        expected = ((3.0 - 2.0) * A / (pd.lam * (4.0 - 3.0) * B)) ** (1.0 / 2.0)
        assert fibering_t(u, pd) == pytest.approx(expected, abs=1e-9)

    def test_scaling_law(self, toy):
        # t(su) = t(u)/s
        u, pd = toy
        assert fibering_t(Field(pd.grid, 2.0 * u.values), pd) == pytest.approx(
            1.0, abs=1e-8
        )

    def test_lambda_monotonicity(self, toy):
        # doubling lambda shrinks the critical point: sqrt(2/(2*0.5)) = sqrt(2)
        u, pd = toy
        assert fibering_t(u, pd.with_params(lam=2.0)) == pytest.approx(
            np.sqrt(2.0), abs=1e-8
        )


class TestFiberingS:
    def test_toy_values(self, toy):
        u, pd = toy
        s = fibering_s(u, pd)
        assert s == pytest.approx(SQRT8, abs=1e-8)
        assert Ray(u, pd).qe(s) == pytest.approx(LAM_E_TOY, abs=1e-8)

    def test_ordering_t_below_s(self, toy):
        u, pd = toy
        assert fibering_t(u, pd) < fibering_s(u, pd)

    def test_lambda_ordering(self, toy):
        u, pd = toy
        ray = Ray(u, pd)
        assert ray.qn(fibering_t(u, pd)) < ray.qe(fibering_s(u, pd))

    def test_re_derivative_identity(self, toy):
        # R_n(tu) - R_e(tu) = (t/q) dR_e/dt, instantiated at t = 1
        u, pd = toy
        ray = Ray(u, pd)
        lhs = ray.qn(1.0) - ray.qe(1.0)
        assert lhs == pytest.approx(2.5 - 3.375, abs=1e-10)
        assert lhs == pytest.approx((1.0 / 3.0) * ray.dqe(1.0), rel=1e-10)


class TestNehariRoots:
    def test_two_roots_quadratic_oracle(self, toy):
        # 2/t + 0.5 t = 2.5  <=>  t^2 - 5t + 4 = 0  <=>  t in {1, 4}
        u, pd = toy
        roots = nehari_roots(u, pd)
        assert roots.status == "two"
        assert roots.t_minus == pytest.approx(1.0, abs=1e-8)
        assert roots.t_plus == pytest.approx(4.0, abs=1e-8)
        assert roots.t_minus < roots.t_crit < roots.t_plus

    def test_degenerate_at_level(self, toy):
        u, pd = toy
        roots = nehari_roots(u, pd.with_params(mu=2.0))
        assert roots.status == "degenerate"
        assert roots.t_minus == pytest.approx(2.0, abs=1e-8)

    def test_empty_below_level(self, toy):
        u, pd = toy
        assert nehari_roots(u, pd.with_params(mu=1.5)).status == "empty"

    def test_negative_mu_empty(self, toy):
        # Q_n > 0 always, so any mu <= 0 misses the ray
        u, pd = toy
        assert nehari_roots(u, pd.with_params(mu=-0.3)).status == "empty"


class TestClassify:
    def test_branches_on_toy(self, toy):
        u, pd = toy
        assert classify(u, 1.0, pd) == "minus"
        assert classify(u, 4.0, pd) == "plus"

    def test_zero_at_double_root(self, toy):
        u, pd = toy
        assert classify(u, 2.0, pd.with_params(mu=2.0)) == "zero"

    def test_off_nehari_raises(self, toy):
        u, pd = toy
        with pytest.raises(NotOnNehari):
            classify(u, 2.0, pd)

    def test_closure_perturbation(self, toy):
        # perturbing the degenerate point along the ray lands in minus/plus
        # after re-leveling mu = Q_n(t)
        u, pd = toy
        ray = Ray(u, pd)
        for delta, expected in ((-0.05, "minus"), (0.05, "plus")):
            t = 2.0 + delta
            pd_lvl = pd.with_params(mu=ray.qn(t))
            assert classify(u, t, pd_lvl) == expected


class TestFiberingSecond:
    def test_toy_oracle(self, toy):
        # Q_n''(t) = 4/t^3 at the critical point t = 2
        u, pd = toy
        assert fibering_second(u, 2.0, pd) == pytest.approx(0.5, abs=1e-8)

    def test_scaling_invariance(self, toy):
        # Q_n''(t(u)) * t(u)^2 is invariant under the reparametrization u -> s u
        u, pd = toy
        base = fibering_second(u, 2.0, pd) * 2.0**2
        for s in (0.5, 2.0):
            t_scaled = 2.0 / s
            scaled = fibering_second(Field(pd.grid, s * u.values), t_scaled, pd)
            assert scaled * t_scaled**2 == pytest.approx(base, rel=1e-9)

    def test_positive_at_degenerate_point(self, toy):
        u, pd = toy
        assert fibering_second(u, 2.0, pd.with_params(mu=2.0)) > 0.0

    def test_fd_matches_analytic_power_sum(self, rng):
        pd = make_problem("ps23", n=9)
        law = pd.law
        stripped = custom(law.phi_fn, law.phi_prime_fn, law.ell, law.m_idx,
                          Phi=law.Phi_fn)
        pd_fd = pd.with_params()
        pd_fd.law = stripped
        for _ in range(5):
            u = Field(pd.grid, rng.standard_normal(9))
            t = 0.5 + 2.0 * rng.random()
            analytic = fibering_second(u, t, pd)
            fd = fibering_second(u, t, pd_fd)
            assert fd == pytest.approx(analytic, rel=1e-4)


class TestMonotoneReformulations:
    @pytest.mark.parametrize("name", ["power2", "ps23", "plog2"])
    def test_k_fn_strictly_increasing(self, name, rng):
        pd = make_problem(name, n=9)
        u = Field(pd.grid, rng.standard_normal(9))
        ray = Ray(u, pd)
        ts = np.geomspace(1e-2, 1e2, 200)
        vals = np.array([ray.k_fn(t) for t in ts])
        slack = 1e-12 * np.maximum(1.0, np.abs(vals[:-1]))
        assert np.all(np.diff(vals) > -slack)

    def test_qn_growth_limits(self, toy):
        # Q_n(t) t^{q-m} bounded below near 0; Q_n(t) t^{q-p} near infinity
        u, pd = toy
        ray = Ray(u, pd)
        q, p, m = pd.q, pd.p, pd.law.m_idx
        small = np.geomspace(1e-6, 1e-2, 10)
        big = np.geomspace(1e2, 1e6, 10)
        assert min(ray.qn(t) * t ** (q - m) for t in small) > 0.0
        assert min(ray.qn(t) * t ** (q - p) for t in big) > 0.0


class TestRayEnergies:
    def test_branch_energy_polynomial(self, toy):
        # I(tu) = t^2 - (mu/3) t^3 + 0.125 t^4 on the calibrated ray
        from nrq.functionals import energy

        u, pd = toy
        assert energy(Field(pd.grid, 1.0 * u.values), pd) == pytest.approx(
            1.0 - 2.5 / 3.0 + 0.125, abs=1e-10
        )
        assert energy(Field(pd.grid, 4.0 * u.values), pd) == pytest.approx(
            16.0 - (2.5 / 3.0) * 64.0 + 0.125 * 256.0, abs=1e-8
        )

    def test_single_ray_sign_trichotomy(self, toy):
        # sign of I at the plus root follows mu against Lambda_e = 2.12132...
        from nrq.functionals import energy

        u, pd = toy
        lam_e = 6.0 * np.sqrt(0.125)
        for mu, expected_sign in ((2.1, 1.0), (lam_e, 0.0), (2.5, -1.0)):
            pdm = pd.with_params(mu=mu)
            roots = nehari_roots(u, pdm)
            E = energy(Field(pd.grid, roots.t_plus * u.values), pdm)
            if expected_sign == 0.0:
                assert abs(E) < 1e-8
            else:
                assert np.sign(E) == expected_sign


class TestProfile:
    def test_normalized_and_ordered(self, toy):
        u, pd = toy
        prof = build_profile(u, pd, n_samples=40)
        assert luxemburg_norm(prof.u, pd) == pytest.approx(1.0, rel=1e-9)
        assert prof.t_crit < prof.s_crit
        assert prof.lambda_n < prof.lambda_e
        assert prof.samples.shape == (40, 4)

    def test_zero_homogeneity_of_levels(self, toy):
        u, pd = toy
        base_n = build_profile(u, pd).lambda_n
        base_e = build_profile(u, pd).lambda_e
        for s in (0.5, 2.0, 10.0):
            prof = build_profile(Field(pd.grid, s * u.values), pd)
            assert prof.lambda_n == pytest.approx(base_n, rel=1e-10)
            assert prof.lambda_e == pytest.approx(base_e, rel=1e-10)

    def test_dqn_signs_around_crit(self, toy):
        u, pd = toy
        prof = build_profile(u, pd, n_samples=60)
        ts, dqn = prof.samples[:, 0], prof.samples[:, 3]
        assert np.all(dqn[ts < 0.98 * prof.t_crit] < 0)
        assert np.all(dqn[ts > 1.02 * prof.t_crit] > 0)

    def test_root_norm_lower_bound(self, toy):
        # norm floor of the projected point, with witnessed S_p
        u, pd = toy
        w = Field(pd.grid, fibering_t(u, pd) * u.values)
        pd.fold_embedding_witness(pd.p, w)
        Sp = pd.embedding(pd.p).value
        ell, m, q, p = pd.law.ell, pd.law.m_idx, pd.q, pd.p
        nrm = luxemburg_norm(w, pd)
        rhs = (ell * (q - m) / (pd.lam * (p - q) * Sp**p)) * min(nrm**ell, nrm**m)
        assert nrm**p >= rhs - 1e-12
