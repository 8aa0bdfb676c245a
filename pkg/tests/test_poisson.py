import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, optimize, special

from stoprule import poisson
from stoprule.models import (
    DomainError,
    InvalidPolicyError,
    PrecisionError,
)


class TestSpecialFunctions:
    def test_erf_complement_identity(self):
        for x in np.linspace(-6, 6, 61):
            assert special.erf(x) + special.erfc(x) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("x", [1e-3, 0.01, 0.3, 0.9999, 1.0, 1.5, 4.0, 12.0, 30.0])
    def test_e1_against_quadrature(self, x):
        want, _ = integrate.quad(lambda s: math.exp(-s) / s, x, np.inf,
                                 epsabs=1e-14, epsrel=1e-13, limit=300)
        assert poisson.expint_e1(x) == pytest.approx(want, abs=1e-12)

    def test_e1_against_scipy(self):
        for x in np.geomspace(1e-3, 50.0, 200):
            assert poisson.expint_e1(float(x)) == pytest.approx(
                float(special.exp1(x)), rel=1e-13, abs=1e-300
            )

    def test_e1_domain(self):
        with pytest.raises(DomainError):
            poisson.expint_e1(0.0)
        with pytest.raises(DomainError):
            poisson.expint_e1(-1.0)

    def test_gamma_incomplete_half_identities(self):
        b = 0.7606604964068338
        left = poisson.gamma_incomplete(0.5, b, math.inf)
        assert left == pytest.approx(math.sqrt(math.pi) * special.erfc(math.sqrt(b)), abs=1e-12)
        right = poisson.gamma_incomplete(0.5, 0.0, b)
        assert right == pytest.approx(math.sqrt(math.pi) * special.erf(math.sqrt(b)), abs=1e-12)

    @pytest.mark.parametrize(
        "a,b,c",
        [
            (0.5, 0.0, 1.3),
            (0.5, 0.2, math.inf),
            (1.0, 0.0, 2.0),
            (2.5, 0.7, 9.0),
            (-0.5, 0.8, math.inf),
            (0.0001, 0.5, 4.0),
            (1.5, 0.0, math.inf),
        ],
    )
    def test_gamma_incomplete_against_mpmath(self, a, b, c):
        want = float(mpmath.gammainc(a, b, mpmath.inf if math.isinf(c) else c))
        assert poisson.gamma_incomplete(a, b, c) == pytest.approx(want, rel=1e-11, abs=1e-12)

    def test_gamma_incomplete_domain(self):
        with pytest.raises(DomainError):
            poisson.gamma_incomplete(-0.5, 0.0, 1.0)
        with pytest.raises(DomainError):
            poisson.gamma_incomplete(0.5, -1.0, 1.0)
        with pytest.raises(DomainError):
            poisson.gamma_incomplete(0.5, 2.0, 1.0)


class TestBoxFunctions:
    def test_zero_area_limits(self):
        assert poisson.jump_success_rect(0.0) == 1.0
        assert poisson.drift_success_rect(0.0) == 0.0
        assert poisson.jump_success_tri(0.0) == 1.0
        assert poisson.drift_success_tri(0.0) == 0.0

    def test_negative_area_rejected(self):
        for f in (poisson.jump_success_rect, poisson.drift_success_rect,
                  poisson.jump_success_tri, poisson.drift_success_tri):
            with pytest.raises(DomainError):
                f(-0.1)

    @pytest.mark.parametrize("z", [0.05, 0.3, 0.8, 1.7, 3.0])
    def test_rect_against_quadrature(self, z):
        j_ref, _ = integrate.quad(lambda u: math.exp(-z * u), 0.0, 1.0, epsabs=1e-14)
        assert poisson.jump_success_rect(z) == pytest.approx(j_ref, abs=1e-13)
        d_ref, _ = integrate.quad(
            lambda s: math.exp(-s) * poisson.jump_success_rect(z - s), 0.0, z, epsabs=1e-13
        )
        assert poisson.drift_success_rect(z) == pytest.approx(d_ref, abs=1e-11)

    @pytest.mark.parametrize("z", [0.05, 0.3, 0.8, 1.7, 3.0])
    def test_tri_jump_against_quadrature(self, z):
        j_ref, _ = integrate.quad(lambda u: math.exp(-z * u * u), 0.0, 1.0, epsabs=1e-14)
        assert poisson.jump_success_tri(z) == pytest.approx(j_ref, abs=1e-13)

    @pytest.mark.parametrize("z", [0.1, 0.4, 0.76, 1.3, 2.5])
    def test_tri_drift_three_routes(self, z):
        one_d = poisson.drift_success_tri(z)
        # independent single-integral route along the sliding record location
        first_form = poisson.drift_success_tri_first_form(z)
        assert one_d == pytest.approx(first_form, abs=1e-10)
        # raw 2-D quadrature of the defining double integral
        raw, _ = integrate.dblquad(
            lambda v, u: math.exp(0.5 * (u * u - v * v)),
            0.0, math.sqrt(2.0 * z), 0.0, lambda u: u,
            epsabs=1e-12,
        )
        assert one_d == pytest.approx(math.exp(-z) * raw, abs=1e-10)

    def test_ordering_drift_below_jump_near_optimum(self):
        # drift < jump holds on the region containing the optimal area
        # (crossings sit near z = 1.50 rect / z = 1.90 tri, beyond which
        # waiting for the next arrival beats a uniformly placed record)
        for z in np.linspace(0.01, 1.4, 30):
            j, d = poisson.jump_success_rect(z), poisson.drift_success_rect(z)
            assert 0.0 < d < j < 1.0
            j, d = poisson.jump_success_tri(z), poisson.drift_success_tri(z)
            assert 0.0 < d < j < 1.0
        assert poisson.drift_success_rect(5.0) > poisson.jump_success_rect(5.0)
        assert poisson.drift_success_tri(5.0) > poisson.jump_success_tri(5.0)


class TestBetaStar:
    def test_rect_value(self):
        rep = poisson.beta_star("rect")
        assert rep.root == pytest.approx(0.804352, abs=1e-5)
        assert abs(rep.residual) <= 1e-12
        assert rep.bracket[0] <= rep.root <= rep.bracket[1]
        assert rep.iterations > 0

    def test_tri_value(self):
        rep = poisson.beta_star("tri")
        assert rep.root == pytest.approx(0.760660, abs=1e-5)
        assert abs(rep.residual) <= 1e-12

    def test_balance_equation(self):
        for geom, drift in (("rect", poisson.drift_success_rect),
                            ("tri", poisson.drift_success_tri)):
            b = poisson.beta_star(geom).root
            assert drift(b) == pytest.approx(math.exp(-b), abs=1e-12)

    def test_local_maximum(self):
        for geom in ("rect", "tri"):
            b = poisson.beta_star(geom).root
            peak = poisson.success_prob_boundary(geom, b)
            assert poisson.success_prob_boundary(geom, b - 1e-4) <= peak
            assert poisson.success_prob_boundary(geom, b + 1e-4) <= peak

    def test_maximum_over_log_grid(self):
        for geom in ("rect", "tri"):
            b = poisson.beta_star(geom).root
            peak = poisson.success_prob_boundary(geom, b)
            for beta in np.geomspace(0.01, 10.0, 120):
                assert poisson.success_prob_boundary(geom, float(beta)) <= peak + 1e-12

    def test_bad_geometry(self):
        with pytest.raises(DomainError):
            poisson.beta_star("hex")


class TestBoundaryValues:
    def test_samuels_value(self):
        assert poisson.samuels_value() == pytest.approx(0.580164, abs=1e-6)

    def test_rect_boundary_at_optimum_is_samuels(self):
        b = poisson.beta_star("rect").root
        assert poisson.success_prob_boundary("rect", b) == pytest.approx(
            poisson.samuels_value(), abs=1e-12
        )

    def test_tri_boundary_at_optimum(self):
        b = poisson.beta_star("tri").root
        assert poisson.success_prob_boundary("tri", b) == pytest.approx(0.703128, abs=1e-5)

    def test_small_beta_vanishes(self):
        assert poisson.success_prob_boundary("rect", 1e-6) < 1e-4
        with pytest.raises(DomainError):
            poisson.success_prob_boundary("rect", 0.0)

    def test_finite_horizon_variant(self):
        b = poisson.beta_star("rect").root
        assert poisson.gm_limit_finite_T(b) == pytest.approx(math.exp(-b), abs=1e-14)
        assert poisson.gm_limit_finite_T(50.0) == pytest.approx(
            poisson.samuels_value(), abs=1e-9
        )
        assert poisson.gm_limit_finite_T(math.inf) == pytest.approx(
            poisson.samuels_value(), abs=1e-15
        )
        with pytest.raises(DomainError):
            poisson.gm_limit_finite_T(0.5)

    def test_finite_horizon_monotone(self):
        values = [poisson.gm_limit_finite_T(t) for t in (0.81, 1.0, 2.0, 5.0, 20.0)]
        assert all(a < b for a, b in zip(values, values[1:]))


class TestThetaFamily:
    def test_anchor_theta_one(self):
        rep = poisson.theta_beta_star(1.0)
        assert rep.root == pytest.approx(poisson.beta_star("rect").root, abs=1e-9)
        assert poisson.theta_limit(1.0) == pytest.approx(poisson.samuels_value(), abs=1e-6)

    def test_anchor_theta_half(self):
        rep = poisson.theta_beta_star(0.5)
        b_tri = poisson.beta_star("tri").root
        assert rep.root == pytest.approx(b_tri, abs=1e-9)
        value = poisson.theta_limit(0.5)
        # erf/erfc closed form of the triangular optimum
        closed = math.exp(-b_tri) + (
            math.exp(b_tri) * math.sqrt(math.pi) / (2.0 * math.sqrt(b_tri))
            * math.erf(math.sqrt(b_tri)) - 1.0
        ) * math.sqrt(math.pi * b_tri) * math.erfc(math.sqrt(b_tri))
        assert value == pytest.approx(closed, abs=1e-10)
        assert value == pytest.approx(
            poisson.success_prob_boundary("tri", b_tri), abs=1e-8
        )
        # the gamma-function route evaluated directly at theta = 1/2
        direct = (
            poisson.gamma_incomplete(0.5, b_tri, math.inf)
            * (-math.sqrt(b_tri) + 0.5 * math.exp(b_tri) * poisson.gamma_incomplete(0.5, 0.0, b_tri))
            + math.exp(-b_tri)
        )
        assert value == pytest.approx(direct, abs=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            poisson.theta_limit(0.0)
        with pytest.raises(DomainError):
            poisson.theta_beta_star(-1.0)

    def test_values_decrease_in_theta(self):
        # smaller theta biases the area jumps toward zero, which helps
        v_quarter = poisson.theta_limit(0.25)
        v_half = poisson.theta_limit(0.5)
        v_one = poisson.theta_limit(1.0)
        v_four = poisson.theta_limit(4.0)
        assert v_quarter > v_half > v_one > v_four > 0.35


class TestLadder:
    def test_printed_roots(self):
        ladder = poisson.rect_roots(20, 1.0)
        assert ladder.root(1) == pytest.approx(math.e, abs=1e-12)
        assert ladder.root(2) == pytest.approx(math.sqrt(3.0), abs=1e-9)
        for k, z in ((3, 1.381554), (4, 1.258476), (5, 1.195517),
                     (10, 1.088218), (15, 1.056969), (20, 1.042069)):
            assert ladder.root(k) == pytest.approx(z, abs=1e-5)

    def test_residuals(self):
        ladder = poisson.rect_roots(200, 1.0)
        for k in range(2, 201):
            assert abs(poisson.ladder_residual(k, ladder.root(k))) <= 1e-12

    def test_decreasing_to_one(self):
        ladder = poisson.rect_roots(200, 1.0)
        roots = ladder.roots[1:]
        assert np.all(np.diff(roots) < 0.0)
        assert roots[-1] > 1.0
        assert ladder.root(200) < 1.01

    def test_cutoffs_increasing_in_unit_interval(self):
        ladder = poisson.rect_roots(50, 1.0)
        ts = ladder.cutoffs[1:]
        assert ts[0] == 0.0
        assert np.all(np.diff(ts) > 0.0)
        assert np.all((ts >= 0.0) & (ts <= 1.0))

    def test_clamping_below_unit_intensity(self):
        lam = 0.5  # e^lam < sqrt(3), so level 2 is clamped
        ladder = poisson.rect_roots(6, lam)
        assert ladder.root(1) == pytest.approx(math.exp(lam), abs=1e-14)
        assert ladder.root(2) == pytest.approx(math.exp(lam), abs=1e-14)
        assert ladder.cutoff(2) == 0.0
        assert ladder.root(3) < math.exp(lam)
        assert ladder.cutoff(3) > 0.0

    def test_validation(self):
        with pytest.raises(DomainError):
            poisson.rect_roots(0)
        with pytest.raises(DomainError):
            poisson.rect_roots(5, -1.0)
        with pytest.raises(DomainError):
            poisson.ladder_residual(1, 2.0)


class TestRectLimit:
    def test_unit_intensity_value(self):
        d = poisson.rect_limit(1.0)
        assert d.total == pytest.approx(0.761260, abs=1e-5)
        assert d.jump > 0 and d.drift > 0

    def test_jump_series_forms_agree(self):
        k_max = poisson._auto_k_max(1.0, 1e-10)
        z = np.minimum(poisson._eqz_roots(k_max + 1), math.e)
        simplified = poisson._jump_series_simplified(z, k_max)
        double = poisson._jump_series_double(z, 1.0, k_max)
        assert simplified == pytest.approx(double, abs=1e-10)

    def test_closed_series_total(self):
        # telescoped total with explicit constants
        k_max = 80
        z = np.minimum(poisson._eqz_roots(k_max + 2), math.e)
        tail = math.fsum(
            math.exp(-k) * (z[k + 1] - math.exp((k + 1) * math.log(z[k + 1])) / (k + 1))
            for k in range(2, k_max)
        )
        closed = (
            2.0 - math.e + 1.0 / (math.e - 1.0)
            + (1.0 - 2.0 * math.sqrt(3.0)) / (2.0 * math.e)
            + math.e * math.log(math.e - 1.0) - tail
        )
        assert poisson.rect_limit(1.0).total == pytest.approx(closed, abs=1e-8)

    def test_small_intensity_approaches_continuous_game(self):
        assert poisson.rect_limit(0.003).total == pytest.approx(
            poisson.samuels_value(), abs=5e-3
        )

    def test_monotone_in_intensity(self):
        lams = [0.02, 0.1, 0.3, 0.6, 1.0]
        values = [poisson.rect_limit(l).total for l in lams]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert values[0] >= poisson.samuels_value() - 5e-3

    def test_tail_bound_honest(self):
        for lam, k_small in ((1.0, 12), (0.5, 25)):
            truncated = poisson.rect_limit(lam, k_max=k_small, tol=1.0).total
            full = poisson.rect_limit(lam).total
            assert abs(full - truncated) <= poisson.rect_limit_tail_bound(lam, k_small)

    def test_precision_error_reports_required_k(self):
        with pytest.raises(PrecisionError) as err:
            poisson.rect_limit(1.0, k_max=5, tol=1e-10)
        assert err.value.required_k_max is not None
        poisson.rect_limit(1.0, k_max=err.value.required_k_max, tol=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            poisson.rect_limit(0.0)


class TestGeneralBoundary:
    def test_optimal_cutoffs_reproduce_limit(self):
        ladder = poisson.rect_roots(45, 1.0)
        d = poisson.rect_general_boundary(ladder.cutoffs[1:])
        assert d.total == pytest.approx(poisson.rect_limit(1.0).total, abs=1e-8)

    def test_two_level_optimum(self):
        res = optimize.minimize_scalar(
            lambda t2: -poisson.rect_general_boundary([0.0, t2]).total,
            bounds=(0.0, 1.0), method="bounded",
            options={"xatol": 1e-10},
        )
        assert -res.fun == pytest.approx(0.730694, abs=1e-4)
        assert res.x == pytest.approx(0.450694, abs=1e-4)

    def test_all_zero_cutoffs_fail(self):
        # stopping at the first record up to level K from time zero: as K
        # grows this approaches "stop at the very first arrival", whose mark
        # is unbounded, so the value decays to zero; always far below optimal
        totals = [poisson.rect_general_boundary(np.zeros(k)).total for k in (5, 15, 40)]
        assert totals[0] > totals[1] > totals[2]
        assert totals[2] < 0.05
        assert all(t < poisson.rect_limit(1.0).total for t in totals)

    def test_suboptimal_cutoffs_do_worse(self):
        best = poisson.rect_limit(1.0).total
        rng = np.random.default_rng(5)
        for _ in range(10):
            t = np.sort(rng.uniform(0.0, 1.0, 12))
            t[0] = 0.0
            assert poisson.rect_general_boundary(t).total <= best + 1e-9

    def test_validation(self):
        with pytest.raises(InvalidPolicyError):
            poisson.rect_general_boundary([0.5, 0.4])
        with pytest.raises(InvalidPolicyError):
            poisson.rect_general_boundary([0.2, 1.4])
        with pytest.raises(InvalidPolicyError):
            poisson.rect_general_boundary([])
