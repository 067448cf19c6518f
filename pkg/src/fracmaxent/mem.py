"""Maximum entropy in the mean (MEM) with a Poisson reference measure.

The density of Y is discretized on the midpoint partition of [0, 1] into M
cells, A[i, j] = ((2j - 1) / 2M)**alpha_i, and the masses x_j >= 0 must solve
A x = mu.  With a product of Poisson(eta) reference measures the dual is

    Sigma(lambda) = -eta * sum_j (1 - exp(-(A^T lambda)_j)) + <lambda, mu>

over lambda = (lambda_0, ..., lambda_K).  Minimizing over lambda_0 in closed
form leaves ln z(lambda_hat) + <lambda_hat, mu_hat> plus a constant in eta,
with z = sum_j exp(-(A_hat^T lambda_hat)_j), so eta drops out of the
normalized masses x_j = exp(-(A_hat^T lambda_hat)_j) / z.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .density import DensityOnS
from .moments import AlphaGrid, FractionalMoments
from .optimize import ConvergenceError, SolverOptions, barzilai_borwein, discrepancy_descent

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DesignMatrix:
    A: np.ndarray
    grid: AlphaGrid

    @property
    def M(self) -> int:
        return self.A.shape[1]

    @property
    def midpoints(self) -> np.ndarray:
        return (2 * np.arange(1, self.M + 1) - 1) / (2 * self.M)


def build_design_matrix(M: int, grid: AlphaGrid) -> DesignMatrix:
    if M < 2:
        raise ValueError(f"partition size M must be at least 2, got {M}")
    mid = (2 * np.arange(1, M + 1) - 1) / (2 * M)
    A = mid[None, :] ** grid.alphas[:, None]
    A[0] = 1.0
    A.setflags(write=False)
    return DesignMatrix(A, grid)


def _full_lambda(lam, matrix: DesignMatrix) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != matrix.A.shape[0]:
        raise ValueError(f"expected {matrix.A.shape[0]} multipliers (lambda_0..lambda_K), got {lam.size}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("multipliers must be finite")
    return lam


def mem_dual(lam, moments: FractionalMoments, matrix: DesignMatrix, eta: float) -> float:
    """Poisson-reference dual at the full multiplier vector (lambda_0 first)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    lam = _full_lambda(lam, matrix)
    return float(-eta * np.sum(-np.expm1(-(lam @ matrix.A))) + lam @ moments.mu)


def mem_gradient(lam, moments: FractionalMoments, matrix: DesignMatrix, eta: float) -> np.ndarray:
    lam = _full_lambda(lam, matrix)
    return moments.mu - eta * (matrix.A @ np.exp(-(lam @ matrix.A)))


def optimal_lambda0(lambda_hat, matrix: DesignMatrix, eta: float) -> float:
    """The lambda_0 minimizing the dual for fixed lambda_hat: ln(eta * z)."""
    u = np.asarray(lambda_hat, dtype=float) @ matrix.A[1:]
    c = u.min()
    return float(np.log(eta) + np.log(np.sum(np.exp(-(u - c)))) - c)


def mem_reduced_dual(lambda_hat, moments: FractionalMoments, matrix: DesignMatrix, eta: float) -> float:
    """min over lambda_0 of :func:`mem_dual`, i.e. 1 - eta M + ln(eta z) + <lambda_hat, mu_hat>."""
    lambda_hat = np.asarray(lambda_hat, dtype=float)
    lam0 = optimal_lambda0(lambda_hat, matrix, eta)
    return float(1.0 - eta * matrix.M + lam0 + lambda_hat @ moments.mu[1:])


def _masses(lambda_hat: np.ndarray, Ahat: np.ndarray):
    u = lambda_hat @ Ahat
    c = u.min()
    e = np.exp(-(u - c))
    z = e.sum()
    return e / z, np.log(z) - c


@dataclass(frozen=True)
class MemSolution:
    x: np.ndarray
    lambda_hat: np.ndarray
    eta: float
    matrix: DesignMatrix
    residuals: np.ndarray
    iterations: int
    converged: bool = True

    @property
    def M(self) -> int:
        return self.matrix.M

    @property
    def grid(self) -> AlphaGrid:
        return self.matrix.grid

    @property
    def lambda0(self) -> float:
        return optimal_lambda0(self.lambda_hat, self.matrix, self.eta)

    def to_json(self) -> str:
        return json.dumps(
            {
                "alphas": self.grid.alphas.tolist(),
                "lambda_hat": self.lambda_hat.tolist(),
                "eta": self.eta,
                "M": self.M,
                "x": self.x.tolist(),
                "residuals": self.residuals.tolist(),
                "iterations": int(self.iterations),
                "converged": bool(self.converged),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MemSolution":
        d = json.loads(text)
        matrix = build_design_matrix(d["M"], AlphaGrid(d["alphas"]))
        return cls(np.asarray(d["x"]), np.asarray(d["lambda_hat"]), d["eta"], matrix,
                   np.asarray(d.get("residuals", [])), d.get("iterations", 0), d.get("converged", True))


def fit_mem(
    moments: FractionalMoments,
    M: int = 200,
    eta: float = 2.0,
    opts: SolverOptions = SolverOptions(),
    best_effort: bool = False,
    discrepancy: float = 2.0,
) -> MemSolution:
    """Minimize the reduced Poisson dual with (whitened) Barzilai-Borwein.

    The midpoint system A x = mu is often infeasible for sample moments: the
    200-cell grid cannot carry the mass a sharply peaked density puts near
    y = 0, and the dual then has no minimizer.  By default that raises
    ConvergenceError.  With ``best_effort`` the dual is instead descended by
    plain BB from lambda = 0 and stopped at the first iterate whose residuals
    are all within ``discrepancy`` standard errors of the sample moments
    (``moments.stderr``); the returned solution has ``converged=False``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    matrix = build_design_matrix(M, moments.grid)
    Ahat = matrix.A[1:]
    target = moments.mu[1:]

    def fg(lh):
        x, lnz = _masses(lh, Ahat)
        return lnz + lh @ target, target - Ahat @ x

    def hess(lh):
        x, _ = _masses(lh, Ahat)
        m = Ahat @ x
        return (Ahat * x) @ Ahat.T - np.outer(m, m)

    with np.errstate(over="ignore", invalid="ignore"):
        res = barzilai_borwein(fg, np.zeros(moments.K), opts, hess=hess)
    x, _ = _masses(res.x, Ahat)
    x = x / x.sum()
    residuals = matrix.A @ x - moments.mu
    worst = float(np.max(np.abs(residuals)))
    if worst <= opts.moment_tol:
        if not res.converged:
            log.warning("MEM gradient tolerance not met after %d iterations; residual %.2g within moment_tol",
                        res.iterations, worst)
        return MemSolution(x, res.x, float(eta), matrix, residuals, res.iterations, res.converged)
    if not best_effort:
        raise ConvergenceError(
            f"MEM fit did not converge in {res.iterations} iterations (max residual {worst:.3g})",
            res.x, residuals, res.iterations,
        )
    return _discrepancy_fit(fg, moments, matrix, eta, opts, discrepancy)


def _discrepancy_fit(fg, moments, matrix, eta, opts, discrepancy) -> MemSolution:
    if moments.stderr is None:
        raise ValueError("best-effort MEM needs moment standard errors")
    res = discrepancy_descent(fg, np.zeros(moments.K), moments.stderr[1:], opts, discrepancy)
    x, _ = _masses(res.x, matrix.A[1:])
    x = x / x.sum()
    residuals = matrix.A @ x - moments.mu
    log.warning("MEM moments infeasible on the %d-cell grid; stopped after %d iterations with max residual %.2g",
                matrix.M, res.iterations, float(np.max(np.abs(residuals))))
    return MemSolution(x, res.x, float(eta), matrix, residuals, res.iterations, False)


class _CellInterpolant:
    """Monotone cubic through (midpoint_j, M x_j), constant in the two half cells at the ends."""

    def __init__(self, sol: MemSolution):
        mid = sol.matrix.midpoints
        vals = sol.M * sol.x
        self.lo, self.hi = mid[0], mid[-1]
        self.v_lo, self.v_hi = vals[0], vals[-1]
        self.p = PchipInterpolator(mid, vals, extrapolate=False)
        self.P = self.p.antiderivative()
        self.total = self.raw_cdf(1.0)

    def raw_pdf(self, y):
        y = np.asarray(y, dtype=float)
        inner = self.p(np.clip(y, self.lo, self.hi))
        return np.where(y < self.lo, self.v_lo, np.where(y > self.hi, self.v_hi, inner))

    def raw_cdf(self, y):
        y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
        yc = np.clip(y, self.lo, self.hi)
        return (
            self.v_lo * np.minimum(y, self.lo)
            + (self.P(yc) - self.P(self.lo))
            + self.v_hi * np.maximum(y - self.hi, 0.0)
        )

    def pdf(self, y):
        return self.raw_pdf(y) / self.total

    def cdf(self, y):
        return np.clip(self.raw_cdf(y) / self.total, 0.0, 1.0)


def interpolate_density(sol: MemSolution) -> DensityOnS:
    """Density of S from the MEM masses via monotone cubic interpolation in y.

    The interpolant passes through M x_j at the cell midpoints, is held
    constant over the outer half cells, and is renormalized to unit mass.
    """
    ip = _CellInterpolant(sol)
    d = DensityOnS(ip.pdf, ip.cdf, label="MEM")
    d.interpolant = ip
    return d
