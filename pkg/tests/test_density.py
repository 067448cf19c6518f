import io

import numpy as np
import pytest
from scipy import stats

from fracmaxent.density import DensityOnS, bisect, l1_distance


def beta_density(a, b):
    d = stats.beta(a, b)
    return DensityOnS(d.pdf, d.cdf, "beta")


class TestDensityOnS:
    def test_exponential(self):
        d = DensityOnS.exponential()
        assert d.moment(1) == pytest.approx(1.0, abs=1e-9)
        assert d.moment(2) == pytest.approx(2.0, abs=1e-8)
        assert d.ppf(0.95) == pytest.approx(np.log(20), abs=1e-9)

    def test_change_of_variables(self):
        # Y ~ Beta(2, 1) means S = -ln Y ~ Gamma(1, 1/2) i.e. Exp(rate 2)
        d = beta_density(2, 1)
        s = np.array([0.0, 0.5, 3.0])
        np.testing.assert_allclose(d.pdf(s), 2 * np.exp(-2 * s), rtol=1e-12)
        np.testing.assert_allclose(d.cdf(s), 1 - np.exp(-2 * s), atol=1e-12)
        assert d.pdf(-1.0) == 0 and d.cdf(-1.0) == 0

    def test_from_ydensity_normalizes(self):
        d = DensityOnS.from_ydensity(lambda y: 3 * np.ones_like(y))
        assert d.cdf(np.log(2)) == pytest.approx(0.5, abs=1e-12)

    def test_mean_excess(self):
        d = DensityOnS.exponential()
        np.testing.assert_allclose(d.mean_excess_integral([0.0, 2.0]), np.exp([0.0, -2.0]), atol=1e-10)

    def test_l1(self):
        assert l1_distance(DensityOnS.exponential(), DensityOnS.exponential()) == 0.0
        # |e^-s - 2e^-2s| integrates to 2 * (F1 - F2) at the crossing s = ln 2: 2 * (1/2 - 1/4)
        assert l1_distance(DensityOnS.exponential(), beta_density(2, 1)) == pytest.approx(0.5, abs=1e-6)

    def test_sampler(self):
        draw = DensityOnS.exponential().sampler()
        x = draw(20000, 3)
        assert stats.kstest(x, "expon").pvalue > 0.01
        np.testing.assert_array_equal(draw(10, 1), draw(10, 1))

    def test_csv(self):
        buf = io.StringIO()
        DensityOnS.exponential().to_csv([0.0, 1.0], buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "s,pdf,cdf"
        assert [float(v) for v in lines[2].split(",")] == pytest.approx([1.0, np.exp(-1), 1 - np.exp(-1)])


def test_bisect_vectorized():
    root = bisect(lambda x: x**2, np.zeros(3), np.full(3, 4.0), np.array([1.0, 4.0, 9.0]), xtol=1e-12)
    np.testing.assert_allclose(root, [1, 2, 3], atol=1e-11)
