"""Individual-loss densities from the aggregate transform.

For S = X_1 + ... + X_N with N ~ Poisson(ell), psi(alpha) = E[exp(-alpha S)]
and phi(alpha) = E[exp(-alpha X)] satisfy psi = exp(-ell (1 - phi)), so

    phi(alpha) = ln(psi(alpha)) / ell + 1.

The phi values are fractional moments of exp(-X) and feed either solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .density import DensityOnS
from .mem import MemSolution, fit_mem, interpolate_density
from .moments import AlphaGrid, FractionalMoments
from .optimize import SolverOptions
from .quadrature import default_rule
from .sme import SmeDensity, density_on_s, fit_sme

log = logging.getLogger(__name__)


class InfeasibleDecompoundError(ValueError):
    def __init__(self, alpha: float, phi: float):
        self.alpha = alpha
        self.phi = phi
        super().__init__(f"severity transform at alpha={alpha:g} is {phi:.6g}, outside (0, 1]")


@dataclass(frozen=True)
class SeverityMoments:
    grid: AlphaGrid
    phi: np.ndarray
    source: str = "maxent"
    stderr: np.ndarray | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).ravel()
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    def as_moments(self) -> FractionalMoments:
        return FractionalMoments(self.grid, self.phi, stderr=self.stderr)


def severity_moments(psi, grid: AlphaGrid, ell: float, source: str = "empirical",
                     psi_stderr=None, rtol: float = 1e-12) -> SeverityMoments:
    """phi = ln(psi) / ell + 1 with the invariants checked.

    ``psi_stderr`` (standard errors of psi) is propagated by the delta method.
    """
    if not ell > 0:
        raise ValueError(f"ell must be positive, got {ell}")
    psi = np.asarray(psi, dtype=float).ravel()
    if psi.size != len(grid):
        raise ValueError("psi and grid lengths differ")
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.log(psi) / ell + 1.0
    phi[grid.alphas == 0] = 1.0
    for a, p in zip(grid.alphas, phi):
        if not (0 < p <= 1 + rtol):
            raise InfeasibleDecompoundError(a, p)
    order = np.argsort(grid.alphas)
    if np.any(np.diff(phi[order]) >= 0):
        bad = grid.alphas[order][1:][np.diff(phi[order]) >= 0][0]
        raise InfeasibleDecompoundError(bad, phi[grid.alphas == bad][0])
    se = None
    if psi_stderr is not None:
        se = np.asarray(psi_stderr, dtype=float) / (ell * psi)
    return SeverityMoments(grid, np.minimum(phi, 1.0), source, se)


def maxent_psi(fit: SmeDensity | MemSolution, grid: AlphaGrid, ell: float, atom: float | None = None) -> np.ndarray:
    """psi(alpha) = p0 + (1 - p0) int y^alpha f*_Y(y) dy, p0 = exp(-ell) by default.

    For an SME fit the integral is computed by quadrature; for a MEM fit it
    is the grid mean sum_j x_j m_j^alpha over the cell midpoints m_j, the
    same discretization the masses were fitted against.
    """
    p0 = float(np.exp(-ell)) if atom is None else float(atom)
    a = grid.alphas
    if isinstance(fit, SmeDensity):
        rule = default_rule(96)
        f = fit.pdf_y(rule.nodes)
        f = f / rule.integrate(f)
        integral = np.array([rule.integrate(rule.nodes**ai * f) for ai in a])
    elif isinstance(fit, MemSolution):
        integral = (fit.matrix.midpoints[None, :] ** a[:, None]) @ fit.x
    else:
        raise TypeError("fit must be an SmeDensity or a MemSolution")
    return p0 + (1.0 - p0) * integral


def fit_individual(sev: SeverityMoments, method: str = "sme", opts: SolverOptions = SolverOptions(),
                   M: int = 200, eta: float = 2.0, best_effort: bool = False) -> DensityOnS:
    """Density of X on (0, inf) from its transform values, via Y = exp(-X)."""
    moments = sev.as_moments()
    if method == "sme":
        d = density_on_s(fit_sme(moments, opts, best_effort=best_effort))
    elif method == "mem":
        d = interpolate_density(fit_mem(moments, M, eta, opts, best_effort=best_effort))
    else:
        raise ValueError(f"method must be 'sme' or 'mem', got {method!r}")
    d.label = f"{method.upper()} severity"
    return d
