"""Densities on (0, inf) obtained from densities of Y = exp(-S) on [0, 1]."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .quadrature import Rule, default_rule, panel_rule, partial_integrals


def bisect(func, lo, hi, target, xtol: float = 1e-10, max_iter: int = 200):
    """Vectorized bisection for a nondecreasing ``func`` with func(lo) <= target <= func(hi)."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    target = np.asarray(target, dtype=float)
    lo, hi, target = np.broadcast_arrays(lo, hi, target)
    lo, hi = lo.copy(), hi.copy()
    for _ in range(max_iter):
        if np.all(hi - lo <= xtol):
            break
        mid = 0.5 * (lo + hi)
        below = func(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


class QuadratureCDF:
    """Normalized CDF of a density on [0, 1] via composite Gauss-Legendre.

    Panel totals are cached; a query integrates from the panel's left edge
    with a 32-point rule.
    """

    def __init__(self, pdf_y: Callable, rule: Rule | None = None):
        self.rule = rule or default_rule()
        self._raw = pdf_y
        panels = self.rule.panel_integrals(pdf_y(self.rule.nodes))
        self.total = float(panels.sum())
        self._cum = np.concatenate(([0.0], np.cumsum(panels))) / self.total

    def pdf(self, y):
        return self._raw(y) / self.total

    def __call__(self, y):
        y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        idx, part = partial_integrals(self._raw, y, self.rule.edges)
        return np.clip(self._cum[idx] + part / self.total, 0.0, 1.0)


class DensityOnS:
    """f_S(s) = exp(-s) f_Y(exp(-s)) together with its CDF and tail functionals.

    ``pdf_y`` must integrate to one on [0, 1] and ``cdf_y`` must be its CDF.
    """

    def __init__(self, pdf_y: Callable, cdf_y: Callable, label: str = ""):
        self.pdf_y = pdf_y
        self.cdf_y = cdf_y
        self.label = label

    @classmethod
    def from_ydensity(cls, pdf_y: Callable, rule: Rule | None = None, label: str = "") -> "DensityOnS":
        """Normalize ``pdf_y`` numerically and build the CDF by quadrature."""
        q = QuadratureCDF(pdf_y, rule)
        return cls(q.pdf, q, label)

    @classmethod
    def exponential(cls) -> "DensityOnS":
        """Unit exponential, i.e. Y uniform on [0, 1]."""
        return cls(lambda y: np.ones_like(np.asarray(y, dtype=float)), lambda y: np.clip(y, 0.0, 1.0), "exponential")

    def pdf(self, s):
        s = np.asarray(s, dtype=float)
        y = np.exp(-np.maximum(s, 0.0))
        return np.where(s >= 0, y * self.pdf_y(y), 0.0)

    def sf(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s > 0, self.cdf_y(np.exp(-np.maximum(s, 0.0))), 1.0)

    def cdf(self, s):
        return 1.0 - self.sf(s)

    def ppf(self, q, xtol: float = 1e-10):
        """Quantile function by bisection on the CDF."""
        q = np.asarray(q, dtype=float)
        if np.any((q <= 0) | (q >= 1)):
            raise ValueError("quantile levels must lie in (0, 1)")
        hi = self.upper(float(np.min(1 - q)) * 0.5)
        return bisect(self.cdf, np.zeros_like(q), np.full_like(q, hi), q, xtol=xtol)

    def upper(self, eps: float = 1e-12) -> float:
        """A point s_max with survival probability below ``eps``."""
        s = 1.0
        while self.sf(s) > eps and s < 1e4:
            s *= 2
        return s

    def mean_excess_integral(self, a, eps: float = 1e-12, order: int = 64):
        """int_a^inf (t - a) f(t) dt, computed as int_a^inf sf(t) dt."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        top = self.upper(eps)
        out = np.empty_like(a)
        for i, ai in enumerate(a):
            if ai >= top:
                out[i] = 0.0
                continue
            edges = np.linspace(ai, top, max(8, int(np.ceil(4 * (top - ai)))) + 1)
            r = panel_rule(edges, order)
            out[i] = r.integrate(self.sf(r.nodes))
        return out

    def s_rule(self, lo: float = 0.0, hi: float | None = None, eps: float = 1e-12, per_unit: int = 4, order: int = 32) -> Rule:
        """Composite rule on [lo, hi] in the S domain (hi defaults to the eps-tail point)."""
        hi = self.upper(eps) if hi is None else hi
        n = max(8, int(np.ceil(per_unit * (hi - lo))))
        return panel_rule(np.linspace(lo, hi, n + 1), order)

    def moment(self, power: float = 1.0) -> float:
        r = self.s_rule(eps=1e-14)
        return float(r.integrate(r.nodes**power * self.pdf(r.nodes)))

    def sampler(self, n_grid: int = 40001, eps: float = 1e-13) -> Callable:
        """Return ``draw(n, seed)`` using an interpolated inverse-CDF table."""
        grid = np.linspace(0.0, self.upper(eps), n_grid)
        F = np.maximum.accumulate(self.cdf(grid))
        keep = np.concatenate(([True], np.diff(F) > 0))
        F, grid = F[keep], grid[keep]

        def draw(n: int, seed: int) -> np.ndarray:
            u = np.random.Generator(np.random.PCG64(seed)).uniform(size=n)
            return np.interp(u, F, grid)

        return draw

    def to_csv(self, grid, dest) -> None:
        grid = np.asarray(grid, dtype=float)
        dest.write("s,pdf,cdf\n")
        for s, f, F in zip(grid, self.pdf(grid), self.cdf(grid)):
            dest.write(f"{float(s)!r},{float(f)!r},{float(F)!r}\n")


def l1_distance(d1: DensityOnS, d2, eps: float = 1e-12) -> float:
    """int_0^inf |f1 - f2|; ``d2`` may be a DensityOnS or a plain pdf callable."""
    f2 = d2.pdf if isinstance(d2, DensityOnS) else d2
    hi = d1.upper(eps)
    if isinstance(d2, DensityOnS):
        hi = max(hi, d2.upper(eps))
    r = panel_rule(np.linspace(0.0, hi, max(64, int(16 * hi)) + 1), 32)
    return float(r.integrate(np.abs(d1.pdf(r.nodes) - f2(r.nodes))))
