"""Fractional moments of Y = exp(-S) from a loss sample."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import LossSample


class MomentError(ValueError):
    pass


class IllConditionedMomentError(MomentError):
    """A conditioned moment fell outside (0, 1]."""

    def __init__(self, alpha: float, value: float):
        self.alpha = alpha
        self.value = value
        super().__init__(f"conditioned moment at alpha={alpha:g} is {value:.3g}, outside (0, 1]")


@dataclass(frozen=True)
class AlphaGrid:
    """Exponents alpha_0 = 0 < ... ; alpha_0 is the normalization slot."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float).ravel()
        if a.size < 2:
            raise MomentError("grid needs alpha_0 and at least one positive exponent")
        if a[0] != 0.0:
            raise MomentError("alpha_0 must be 0")
        if np.any(a[1:] <= 0) or not np.all(np.isfinite(a)):
            raise MomentError("exponents beyond alpha_0 must be positive and finite")
        if np.unique(a).size != a.size:
            raise MomentError("exponents must be distinct")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    @property
    def K(self) -> int:
        return self.alphas.size - 1

    @property
    def positive(self) -> np.ndarray:
        return self.alphas[1:]

    def __len__(self):
        return self.alphas.size


def default_alphas(K: int = 8, scale: float = 1.5) -> AlphaGrid:
    """The grid alpha_i = scale / i, i = 1..K, with alpha_0 = 0 prepended."""
    if K < 1:
        raise MomentError(f"K must be at least 1, got {K}")
    return AlphaGrid(np.concatenate(([0.0], scale / np.arange(1, K + 1))))


def _as_values(sample) -> np.ndarray:
    v = sample.values if isinstance(sample, LossSample) else np.asarray(sample, dtype=float)
    if v.size == 0:
        raise MomentError("empty sample")
    return v


def empirical_laplace(sample, alpha) -> float | np.ndarray:
    """Sample mean of exp(-alpha * s); vectorized over ``alpha``."""
    v = _as_values(sample)
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0):
        raise MomentError("alpha must be nonnegative")
    out = np.exp(-np.multiply.outer(a, v)).mean(axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FractionalMoments:
    """Moments mu(alpha_i) = E[Y^alpha_i | S > 0] and the raw transform psi."""

    grid: AlphaGrid
    mu: np.ndarray
    ell: float | None = None
    psi: np.ndarray | None = None
    atom: float | None = None
    stderr: np.ndarray | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        if mu.size != len(self.grid):
            raise MomentError("mu and grid lengths differ")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if self.psi is not None:
            psi = np.asarray(self.psi, dtype=float).ravel()
            psi.setflags(write=False)
            object.__setattr__(self, "psi", psi)
        if self.stderr is not None:
            se = np.asarray(self.stderr, dtype=float).ravel()
            if se.size != mu.size:
                raise MomentError("stderr and grid lengths differ")
            se.setflags(write=False)
            object.__setattr__(self, "stderr", se)

    @property
    def alphas(self) -> np.ndarray:
        return self.grid.alphas

    @property
    def K(self) -> int:
        return self.grid.K

    def check(self, tol: float = 0.0) -> None:
        """Raise MomentError unless mu_0 = 1, mu in (0, 1] and mu decreases in alpha."""
        if abs(self.mu[0] - 1.0) > 1e-12:
            raise MomentError("mu(alpha_0) must be 1")
        for a, m in zip(self.alphas, self.mu):
            if not (0 < m <= 1 + tol):
                raise IllConditionedMomentError(a, m)
        order = np.argsort(self.alphas)
        if np.any(np.diff(self.mu[order]) > tol):
            raise MomentError("moments must be nonincreasing in alpha")

    def to_json(self) -> str:
        return json.dumps(
            {
                "alphas": self.alphas.tolist(),
                "mu": self.mu.tolist(),
                "psi": None if self.psi is None else self.psi.tolist(),
                "ell": self.ell,
                "atom": self.atom,
                "stderr": None if self.stderr is None else self.stderr.tolist(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "FractionalMoments":
        d = json.loads(text)
        return cls(AlphaGrid(d["alphas"]), d["mu"], d.get("ell"), d.get("psi"), d.get("atom"), d.get("stderr"))


def condition_on_positive(psi, ell: float | None = None, atom: float | None = None) -> np.ndarray:
    """Remove the point mass at S = 0 from Laplace transform values.

    The atom defaults to the Poisson mass exp(-ell).
    """
    p0 = np.exp(-ell) if atom is None else atom
    return (np.asarray(psi, dtype=float) - p0) / (1.0 - p0)


def conditional_moments(sample, grid: AlphaGrid, ell: float, atom: str = "sample") -> FractionalMoments:
    """Empirical transform at the grid, conditioned on S > 0.

    ``atom`` selects the point mass removed at S = 0:

    ``"sample"``
        the observed fraction of zero losses.  The result equals the sample
        mean of exp(-alpha s) over the positive losses, which is always a
        valid moment sequence.
    ``"model"``
        the Poisson mass exp(-ell) of the assumed frequency model.  When the
        sample holds fewer zeros than the model predicts, this leaves a
        negative mass at y = 1 and the maxent dual can become degenerate.

    ``ell`` is the assumed frequency intensity and is kept for decompounding
    either way; it is never estimated here.  ``stderr`` holds the standard
    error of each conditioned moment (zero at alpha_0).
    """
    if not ell > 0:
        raise MomentError(f"ell must be positive, got {ell}")
    if atom not in ("sample", "model"):
        raise ValueError(f"atom must be 'sample' or 'model', got {atom!r}")
    v = _as_values(sample)
    psi = np.atleast_1d(empirical_laplace(v, grid.alphas))
    psi[grid.alphas == 0] = 1.0
    p0 = float(np.mean(v == 0)) if atom == "sample" else float(np.exp(-ell))
    if p0 >= 1.0:
        raise MomentError("sample has no positive losses")
    mu = condition_on_positive(psi, atom=p0)
    mu[grid.alphas == 0] = 1.0
    for a, m in zip(grid.alphas, mu):
        if not m > 0:
            raise IllConditionedMomentError(a, m)
    pool = v[v > 0] if atom == "sample" else v
    if pool.size > 1:
        se = np.exp(-np.multiply.outer(grid.alphas, pool)).std(axis=1, ddof=1) / np.sqrt(pool.size)
        if atom == "model":
            se = se / (1.0 - p0)
        se[grid.alphas == 0] = 0.0
    else:
        se = np.zeros_like(mu)
    return FractionalMoments(grid, mu, ell, psi, p0, se)


def zero_fraction_diagnostic(sample: LossSample, ell: float) -> dict:
    """Compare the assumed atom exp(-ell) with the observed fraction of zeros."""
    n = len(sample)
    p0 = float(np.exp(-ell))
    se = np.sqrt(p0 * (1 - p0) / n)
    return {
        "assumed": p0,
        "observed": sample.zero_fraction,
        "z_score": (sample.zero_fraction - p0) / se,
    }


def moments_from_density(pdf_y, grid: AlphaGrid, rule=None) -> FractionalMoments:
    """Exact fractional moments of a density on [0, 1] (by quadrature)."""
    from .quadrature import default_rule

    rule = rule or default_rule()
    f = pdf_y(rule.nodes)
    mu = np.array([rule.integrate(rule.nodes**a * f) for a in grid.alphas])
    mu = mu / mu[0]
    return FractionalMoments(grid, mu)
