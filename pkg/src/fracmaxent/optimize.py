"""Barzilai-Borwein gradient descent with a nonmonotone line search.

The step length is the BB1 rule s's / s'y.  Acceptance follows the
Grippo-Lampariello-Lucidi nonmonotone Armijo test against the largest of the
last ``memory`` objective values (Raydan's globalized BB).

Maxent duals over fractional moments are badly conditioned (Hessian
eigenvalues spanning ten or more decades), and plain BB stalls far from the
optimum.  When a Hessian callable is supplied the iteration runs in
coordinates whitened by the Hessian at a base point, x = x_base + T theta
with T = V diag(ev**-0.5), and the base point and T are refreshed every
``refresh`` iterations (the BB memory restarts at each refresh).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    moment_tol: float = 1e-6
    max_iter: int = 5000
    memory: int = 10
    step_reset: float = 1e-3
    step_max: float = 1e6
    armijo: float = 1e-4
    precondition: bool = True
    refresh: int = 50
    eig_floor: float = 1e-15


class ConvergenceError(RuntimeError):
    """The minimizer hit ``max_iter``; carries the best iterate found."""

    def __init__(self, message: str, x: np.ndarray, residuals: np.ndarray, iterations: int):
        super().__init__(message)
        self.x = x
        self.residuals = residuals
        self.iterations = iterations


@dataclass
class BBResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    stopped: bool = False


def _whitener(H: np.ndarray, floor: float) -> np.ndarray:
    ev, V = np.linalg.eigh(0.5 * (H + H.T))
    ev = np.maximum(ev, max(ev.max(), 1e-300) * floor)
    return V / np.sqrt(ev)


def barzilai_borwein(
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    opts: SolverOptions = SolverOptions(),
    hess: Callable[[np.ndarray], np.ndarray] | None = None,
    callback: Callable | None = None,
) -> BBResult:
    """Minimize a smooth function given a callable returning (f, grad f).

    Stops when the max-norm of the (unscaled) gradient drops to ``opts.tol``.
    Never raises on non-convergence; check ``converged``.  Three consecutive
    failed line searches end the run early.  A ``callback``
    returning a true value ends the iteration at the current point
    (``stopped`` is then set).
    """
    x = np.array(x0, dtype=float)
    n = x.size
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    gnorm = np.max(np.abs(g))
    best = (f, x.copy(), g.copy())
    use_T = hess is not None and opts.precondition
    it = 0
    since_refresh = opts.refresh
    stopped = False
    failures = 0

    while gnorm > opts.tol and it < opts.max_iter:
        if since_refresh >= opts.refresh:
            # restart: new base point, fresh metric, fresh BB memory
            T = _whitener(hess(x), opts.eig_floor) if use_T else np.eye(n)
            gt = T.T @ g
            step = 1.0 if use_T else 1.0 / max(np.max(np.abs(g)), 1.0)
            recent = [f]
            since_refresh = 0
        it += 1
        since_refresh += 1
        d = -step * gt
        slope = gt @ d
        f_ref = max(recent)
        t = 1.0
        while True:
            x_new = x + T @ (t * d)
            f_new, g_new = fun_grad(x_new)
            if np.isfinite(f_new) and f_new <= f_ref + opts.armijo * t * slope:
                break
            t *= 0.5
            if t < 1e-20:
                x_new, f_new, g_new = x, f, g
                break
        if t < 1e-20:
            # no acceptable step; force a restart, give up after a few in a row
            failures += 1
            if failures >= 3:
                break
            since_refresh = opts.refresh
            continue
        failures = 0
        gt_new = T.T @ g_new
        s = t * d
        y = gt_new - gt
        sy = s @ y
        x, f, g, gt = x_new, f_new, g_new, gt_new
        step = (s @ s) / sy if sy > 0 else opts.step_reset
        if not np.isfinite(step) or step > opts.step_max:
            step = opts.step_reset
        recent.append(f)
        if len(recent) > opts.memory:
            recent.pop(0)
        gnorm = np.max(np.abs(g))
        if gnorm < np.max(np.abs(best[2])):
            best = (f, x.copy(), g.copy())
        if callback is not None and callback(it, x, f, g):
            stopped = True
            break
    converged = bool(gnorm <= opts.tol)
    if stopped:
        return BBResult(x, f, g, it, converged, stopped=True)
    if not converged:
        f, x, g = best
        log.debug("BB stopped after %d iterations, |g|_inf=%.3g", it, np.max(np.abs(g)))
    return BBResult(x, f, g, it, converged)


def discrepancy_descent(
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    stderr,
    opts: SolverOptions = SolverOptions(),
    discrepancy: float = 2.0,
) -> BBResult:
    """Plain BB on a maxent dual, stopped by the discrepancy principle.

    The gradient of a maxent dual is the vector of moment residuals.  When
    the target moments lie outside the moment space the dual has no
    minimizer; descending from ``x0`` and stopping at the first iterate whose
    residuals are all within ``discrepancy`` standard errors gives a
    regularized solution that fits the data to within its noise.
    """
    scale = np.maximum(np.asarray(stderr, dtype=float), opts.moment_tol)

    def small_enough(it, x, f, g):
        return bool(np.max(np.abs(g) / scale) <= discrepancy)

    plain = SolverOptions(tol=opts.tol, moment_tol=opts.moment_tol, max_iter=opts.max_iter,
                          memory=opts.memory, step_reset=opts.step_reset, step_max=1e14,
                          armijo=opts.armijo, precondition=False)
    return barzilai_borwein(fun_grad, x0, plain, callback=small_enough)
