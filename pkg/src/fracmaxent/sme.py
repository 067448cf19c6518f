"""Standard maximum entropy (SME) reconstruction from fractional moments.

The maxentropic density of Y on [0, 1] is

    f(y) = exp(-lambda_0 - sum_k lambda_k y**alpha_k),   lambda_0 = ln Z(lambda),

and the multipliers minimize the convex dual ln Z(lambda) + <lambda, mu>.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .density import DensityOnS, QuadratureCDF
from .moments import AlphaGrid, FractionalMoments
from .optimize import BBResult, ConvergenceError, SolverOptions, barzilai_borwein, discrepancy_descent
from .quadrature import Rule, default_rule

log = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def _powers(alphas: tuple, order: int) -> np.ndarray:
    rule = default_rule(order)
    return rule.nodes[None, :] ** np.asarray(alphas)[:, None]


def _check_lambda(lam, grid: AlphaGrid) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != grid.K:
        raise ValueError(f"expected {grid.K} multipliers (lambda_1..lambda_K), got {lam.size}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("multipliers must be finite")
    return lam


def _log_weights(lam: np.ndarray, grid: AlphaGrid, order: int = 64):
    """Shifted log-integrand -sum lambda_k y^alpha_k + c at the quadrature nodes."""
    P = _powers(tuple(grid.positive), order)
    expo = lam @ P
    c = expo.min()
    return P, -(expo - c), c


def log_partition(lam, grid: AlphaGrid, order: int = 64) -> float:
    lam = _check_lambda(lam, grid)
    rule = default_rule(order)
    _, e, c = _log_weights(lam, grid, order)
    return float(np.log(rule.integrate(np.exp(e))) - c)


def partition_function(lam, grid: AlphaGrid, order: int = 64) -> float:
    """Z(lambda) = int_0^1 exp(-sum_{k>=1} lambda_k y**alpha_k) dy."""
    return float(np.exp(log_partition(lam, grid, order)))


def _expectations(lam: np.ndarray, grid: AlphaGrid, order: int = 64):
    """(ln Z, E_lambda[y**alpha_k] for k >= 1)."""
    rule = default_rule(order)
    P, e, c = _log_weights(lam, grid, order)
    w = rule.weights * np.exp(e)
    z = w.sum()
    return np.log(z) - c, (P @ w) / z


def _covariance(lam: np.ndarray, grid: AlphaGrid, order: int = 64) -> np.ndarray:
    rule = default_rule(order)
    P, e, _ = _log_weights(lam, grid, order)
    w = rule.weights * np.exp(e)
    w /= w.sum()
    m = P @ w
    return (P * w) @ P.T - np.outer(m, m)


def dual_objective(lam, moments: FractionalMoments) -> float:
    """ln Z(lambda) + sum_{k>=1} lambda_k mu_k."""
    lam = _check_lambda(lam, moments.grid)
    return log_partition(lam, moments.grid) + float(lam @ moments.mu[1:])


def dual_gradient(lam, moments: FractionalMoments) -> np.ndarray:
    """mu_k - E_lambda[y**alpha_k], k = 1..K."""
    lam = _check_lambda(lam, moments.grid)
    _, m = _expectations(lam, moments.grid)
    return moments.mu[1:] - m


def dual_hessian(lam, moments: FractionalMoments) -> np.ndarray:
    """Covariance matrix of (y**alpha_k) under the density with multipliers lam."""
    return _covariance(_check_lambda(lam, moments.grid), moments.grid)


@dataclass(frozen=True)
class SmeDensity:
    """Fitted SME density; ``lam[0]`` is ln Z so that f = exp(-sum lam_k y^alpha_k)."""

    grid: AlphaGrid
    lam: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool = True

    def pdf_y(self, y):
        y = np.asarray(y, dtype=float)
        expo = np.tensordot(self.lam, y[None, ...] ** self.grid.alphas.reshape((-1,) + (1,) * y.ndim), axes=1)
        return np.exp(-expo)

    def moments(self, order: int = 96) -> np.ndarray:
        """Moments E[y**alpha_k] of the fitted density, alpha_0 included."""
        rule = default_rule(order)
        f = self.pdf_y(rule.nodes)
        return np.array([rule.integrate(rule.nodes**a * f) for a in self.grid.alphas])

    def to_json(self) -> str:
        return json.dumps(
            {
                "alphas": self.grid.alphas.tolist(),
                "lambda": self.lam.tolist(),
                "residuals": self.residuals.tolist(),
                "iterations": int(self.iterations),
                "converged": bool(self.converged),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SmeDensity":
        d = json.loads(text)
        return cls(AlphaGrid(d["alphas"]), np.asarray(d["lambda"]), np.asarray(d["residuals"]),
                   d["iterations"], d.get("converged", True))


def _verified(res: BBResult, grid: AlphaGrid, moments: FractionalMoments, converged: bool) -> SmeDensity:
    lam = np.concatenate(([log_partition(res.x, grid)], res.x))
    # independent re-check on a different node set
    lam_check = np.concatenate(([log_partition(res.x, grid, order=96)], res.x))
    check = SmeDensity(grid, lam_check, np.zeros(grid.K + 1), res.iterations)
    residuals = check.moments() - moments.mu
    return SmeDensity(grid, lam, residuals, res.iterations, converged)


def fit_sme(
    moments: FractionalMoments,
    opts: SolverOptions = SolverOptions(),
    x0=None,
    best_effort: bool = False,
    discrepancy: float = 2.0,
) -> SmeDensity:
    """Minimize the dual by Barzilai-Borwein starting from lambda = 0.

    The BB iteration runs in coordinates whitened by the dual Hessian (the
    covariance of the features y**alpha_k), see :mod:`fracmaxent.optimize`.

    Converged fits have gradient max-norm <= ``opts.tol``.  A fit that stops
    at ``max_iter`` is still returned if every moment is reproduced within
    ``opts.moment_tol`` (re-checked with a finer rule); otherwise
    ConvergenceError is raised with the best iterate.

    Noisy moments can fall outside the moment space of densities on [0, 1],
    in which case the dual has no minimizer.  With ``best_effort`` such a
    fit falls back to a plain BB descent stopped once all residuals are
    within ``discrepancy`` standard errors (``moments.stderr``), returned
    with ``converged=False``.
    """
    grid = moments.grid
    target = moments.mu[1:]

    def fg(lam):
        lnz, m = _expectations(lam, grid)
        return lnz + lam @ target, target - m

    x0 = np.zeros(grid.K) if x0 is None else np.asarray(x0, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        res: BBResult = barzilai_borwein(fg, x0, opts, hess=lambda lam: _covariance(lam, grid))
        fit = _verified(res, grid, moments, res.converged)
    worst = float(np.max(np.abs(fit.residuals)))
    if worst <= opts.moment_tol and np.all(np.isfinite(fit.lam)):
        if not res.converged:
            log.warning("SME gradient tolerance not met after %d iterations; residual %.2g within moment_tol",
                        res.iterations, worst)
        return fit
    if not best_effort:
        raise ConvergenceError(
            f"SME fit did not converge in {res.iterations} iterations (max residual {worst:.3g})",
            fit.lam, fit.residuals, res.iterations,
        )
    if moments.stderr is None:
        raise ValueError("best-effort SME needs moment standard errors")
    res = discrepancy_descent(fg, np.zeros(grid.K), moments.stderr[1:], opts, discrepancy)
    fit = _verified(res, grid, moments, False)
    log.warning("SME moments not reproducible; stopped after %d iterations with max residual %.2g",
                res.iterations, float(np.max(np.abs(fit.residuals))))
    return fit


def density_on_s(d: SmeDensity, rule: Rule | None = None) -> DensityOnS:
    """Change of variables s = -ln y applied to the fitted density."""
    cdf = QuadratureCDF(d.pdf_y, rule)
    return DensityOnS(cdf.pdf, cdf, label="SME")
