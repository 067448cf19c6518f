import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracmaxent.density import DensityOnS, l1_distance
from fracmaxent.moments import AlphaGrid, FractionalMoments, default_alphas, moments_from_density
from fracmaxent.optimize import ConvergenceError, SolverOptions
from fracmaxent.quadrature import default_rule
from fracmaxent.sme import (
    SmeDensity,
    density_on_s,
    dual_gradient,
    dual_hessian,
    dual_objective,
    fit_sme,
    log_partition,
    partition_function,
)

G1 = AlphaGrid([0.0, 1.0])
GH = AlphaGrid([0.0, 0.5])


def uniform_moments(grid):
    return FractionalMoments(grid, 1 / (grid.alphas + 1))


class TestPartition:
    def test_zero(self):
        assert partition_function(np.zeros(8), default_alphas(8)) == pytest.approx(1.0, abs=1e-14)

    def test_exponential_closed_form(self):
        assert partition_function([1.0], G1) == pytest.approx(1 - np.exp(-1), abs=1e-10)
        assert partition_function([1.0], G1) == pytest.approx(0.632121, abs=1e-6)

    def test_sqrt_closed_form(self):
        # int_0^1 exp(-sqrt(y)) dy = 2 - 4/e
        assert partition_function([1.0], GH) == pytest.approx(2 - 4 / np.e, abs=1e-10)
        assert partition_function([1.0], GH) == pytest.approx(0.528482, abs=1e-6)

    def test_oracle_random(self, rng):
        g = default_alphas(8)
        for _ in range(5):
            lam = rng.uniform(-5, 5, 8)
            brute, _ = integrate.quad(lambda y: np.exp(-np.sum(lam * y ** g.positive)), 0, 1,
                                      epsabs=1e-14, epsrel=1e-13, limit=200)
            assert partition_function(lam, g) == pytest.approx(brute, rel=1e-10)

    def test_large_multipliers_no_overflow(self):
        assert np.isfinite(log_partition([-2000.0], G1))
        assert np.isfinite(log_partition([5e4], G1))

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            partition_function([np.nan], G1)
        with pytest.raises(ValueError):
            partition_function([1.0, 2.0], G1)


class TestDual:
    def test_zero(self):
        assert dual_objective(np.zeros(8), uniform_moments(default_alphas(8))) == pytest.approx(0.0, abs=1e-14)

    def test_closed_form(self):
        m = FractionalMoments(G1, [1.0, 0.5])
        assert dual_objective([1.0], m) == pytest.approx(np.log(1 - np.exp(-1)) + 0.5, abs=1e-12)
        assert dual_objective([1.0], m) == pytest.approx(0.0413249, abs=1e-6)

    def test_gradient_closed_form(self):
        m = FractionalMoments(G1, [1.0, 0.5])
        expected = 0.5 - (1 - 2 * np.exp(-1)) / (1 - np.exp(-1))
        assert dual_gradient([1.0], m)[0] == pytest.approx(expected, abs=1e-12)
        assert dual_gradient([1.0], m)[0] == pytest.approx(0.0819767, abs=1e-6)

    def test_uniform_gradient_zero(self):
        np.testing.assert_allclose(dual_gradient(np.zeros(8), uniform_moments(default_alphas(8))), 0, atol=1e-13)

    def test_gradient_finite_difference(self, rng):
        g = default_alphas(8)
        m = uniform_moments(g)
        h = 1e-6
        worst = 0.0
        for _ in range(100):
            lam = rng.uniform(-5, 5, 8)
            fd = np.array([(dual_objective(lam + h * e, m) - dual_objective(lam - h * e, m)) / (2 * h)
                           for e in np.eye(8)])
            worst = max(worst, np.max(np.abs(fd - dual_gradient(lam, m))))
        assert worst <= 1e-5

    def test_hessian_finite_difference(self, rng):
        g = default_alphas(4)
        m = uniform_moments(g)
        lam = rng.uniform(-3, 3, 4)
        h = 1e-5
        fd = np.array([(dual_gradient(lam + h * e, m) - dual_gradient(lam - h * e, m)) / (2 * h) for e in np.eye(4)])
        np.testing.assert_allclose(fd, dual_hessian(lam, m), atol=1e-6)

    def test_midpoint_convexity(self, rng):
        g = default_alphas(8)
        m = FractionalMoments(g, 2 / (g.alphas + 2))
        for _ in range(100):
            a, b = rng.uniform(-5, 5, (2, 8))
            mid = dual_objective(0.5 * (a + b), m)
            assert mid <= 0.5 * (dual_objective(a, m) + dual_objective(b, m)) + 1e-12


class TestFit:
    def test_uniform(self):
        fit = fit_sme(uniform_moments(default_alphas(8)))
        assert fit.converged
        assert np.max(np.abs(fit.lam)) <= 1e-4
        y = np.linspace(0.01, 0.99, 9)
        np.testing.assert_allclose(fit.pdf_y(y), 1.0, atol=1e-4)

    def test_linear_density(self):
        g = default_alphas(8)
        fit = fit_sme(FractionalMoments(g, 2 / (g.alphas + 2)))
        assert fit.converged
        assert np.max(np.abs(fit.residuals)) <= 1e-6
        y, w = default_rule().nodes, default_rule().weights
        assert np.sum(w * np.abs(fit.pdf_y(y) - 2 * y)) <= 0.05

    @settings(max_examples=10, deadline=None)
    @given(lam=st.lists(st.floats(-3.0, 3.0), min_size=4, max_size=4))
    def test_family_moments_recovered(self, lam):
        # moments of a member of the family are attainable; the fit must recover it
        g = default_alphas(4)
        lam = np.array(lam)
        z = partition_function(lam, g)
        m = moments_from_density(lambda y: np.exp(-(y[..., None] ** g.positive) @ lam) / z, g)
        fit = fit_sme(m)
        assert np.max(np.abs(fit.residuals)) <= 1e-6
        y = np.linspace(0.02, 0.98, 25)
        np.testing.assert_allclose(fit.pdf_y(y), np.exp(-(y[:, None] ** g.positive) @ lam) / z, rtol=1e-3, atol=1e-3)

    def test_normalized(self):
        g = default_alphas(8)
        fit = fit_sme(FractionalMoments(g, 2 / (g.alphas + 2)))
        brute, _ = integrate.quad(fit.pdf_y, 0, 1, epsabs=1e-13, limit=200)
        assert brute == pytest.approx(1.0, abs=1e-8)

    def test_infeasible_raises(self):
        # mu(1.5) > mu(0.75) is impossible for a [0, 1] variable
        g = AlphaGrid([0.0, 0.75, 1.5])
        with pytest.raises(ConvergenceError) as e:
            fit_sme(FractionalMoments(g, [1.0, 0.3, 0.4]), SolverOptions(max_iter=300))
        assert e.value.residuals.size == 3

    def test_best_effort(self):
        g = AlphaGrid([0.0, 0.75, 1.5])
        m = FractionalMoments(g, [1.0, 0.3, 0.31], stderr=[0, 0.01, 0.01])
        fit = fit_sme(m, SolverOptions(max_iter=300), best_effort=True)
        assert not fit.converged
        assert np.max(np.abs(fit.residuals)) <= 0.02 + 1e-9

    def test_json_roundtrip(self):
        g = default_alphas(8)
        fit = fit_sme(FractionalMoments(g, 2 / (g.alphas + 2)))
        back = SmeDensity.from_json(fit.to_json())
        np.testing.assert_array_equal(back.lam, fit.lam)
        assert back.iterations == fit.iterations

    def test_case1(self, case1):
        t = time.perf_counter()
        fit = fit_sme(case1.moments)
        assert time.perf_counter() - t <= 5.0
        assert fit.converged
        assert np.max(np.abs(fit.residuals)) <= 1e-6


class TestDensityOnS:
    def test_uniform_is_exponential(self):
        d = density_on_s(SmeDensity(default_alphas(8), np.zeros(9), np.zeros(9), 0))
        s = np.array([0.1, 1.0, 4.0])
        np.testing.assert_allclose(d.pdf(s), np.exp(-s), rtol=1e-12)
        np.testing.assert_allclose(d.cdf(s), 1 - np.exp(-s), atol=1e-12)
        assert l1_distance(d, DensityOnS.exponential()) < 1e-10

    def test_integrates_to_one(self, case1):
        d = density_on_s(case1.sme)
        r = d.s_rule(eps=1e-14)
        assert r.integrate(d.pdf(r.nodes)) == pytest.approx(1.0, abs=1e-8)
        assert d.cdf(0.0) == 0.0
        s = np.linspace(0, 15, 400)
        assert np.all(np.diff(d.cdf(s)) >= -1e-15)
