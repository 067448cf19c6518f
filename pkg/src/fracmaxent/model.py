"""Compound Poisson-lognormal loss model: simulation and data ingestion.

Random streams
--------------
All randomness derives from ``numpy.random.SeedSequence(seed)``, spawned into
two children: the first drives the Poisson event counts, the second the
standard normal variates behind the lognormal severities.  Severities are
consumed in period order, so period ``k`` owns the contiguous block
``[N_0 + ... + N_{k-1}, N_0 + ... + N_k)`` of the severity stream.  Both
streams use the PCG64 bit generator; severities are ``exp(mu + sigma * Z)``
with ``Z`` from ``Generator.standard_normal``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np


class ParameterError(ValueError):
    """A model parameter lies outside its domain."""


class LossDataError(ValueError):
    """Raised for unparseable or invalid loss records."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CompoundModel:
    """Poisson(ell) frequency with lognormal(mu, sigma) severities."""

    ell: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.ell) or self.ell <= 0:
            raise ParameterError(f"ell must be positive, got {self.ell}")
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not np.isfinite(self.mu):
            raise ParameterError(f"mu must be finite, got {self.mu}")

    @property
    def zero_mass(self) -> float:
        return float(np.exp(-self.ell))

    @property
    def mean(self) -> float:
        return self.ell * np.exp(self.mu + 0.5 * self.sigma**2)

    @property
    def variance(self) -> float:
        # ell * E[X^2]
        return self.ell * np.exp(2 * self.mu + 2 * self.sigma**2)

    def severity_pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        z = (np.log(x[pos]) - self.mu) / self.sigma
        out[pos] = np.exp(-0.5 * z * z) / (x[pos] * self.sigma * np.sqrt(2 * np.pi))
        return out


@dataclass(frozen=True)
class LossSample:
    """Aggregate losses, zeros included."""

    values: np.ndarray
    seed: int | None = None
    zero_count: int = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size and (not np.all(np.isfinite(v)) or np.any(v < 0)):
            raise LossDataError("losses must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "zero_count", int(np.count_nonzero(v == 0)))

    def __len__(self) -> int:
        return self.values.size

    def sorted(self) -> np.ndarray:
        return np.sort(self.values, kind="stable")

    def positive(self) -> np.ndarray:
        """Strictly positive losses, i.e. the sample conditioned on S > 0."""
        return self.values[self.values > 0]

    @property
    def zero_fraction(self) -> float:
        return self.zero_count / len(self) if len(self) else float("nan")


@dataclass(frozen=True)
class CaseSpec:
    model: CompoundModel
    n_observed: int = 8000
    n_test: int = 1500
    label: str = ""

    def __post_init__(self):
        if self.n_observed < 1:
            raise ParameterError("n_observed must be at least 1")
        if self.n_test < 0:
            raise ParameterError("n_test must be nonnegative")


# The five parameter sets used for the reference experiments.
CASES = {
    "case1": CaseSpec(CompoundModel(3.0, 0.0, 0.25), label="Case (1)"),
    "case2": CaseSpec(CompoundModel(1.0, 0.0, 0.25), label="Case (2)"),
    "case3": CaseSpec(CompoundModel(4.0, 0.0, 0.25), label="Case (3)"),
    "case4": CaseSpec(CompoundModel(3.0, 0.1, 0.25), label="Case (4)"),
    "case5": CaseSpec(CompoundModel(3.0, 0.0, 0.5), label="Case (5)"),
}


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    counts, severities = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(counts)), np.random.Generator(np.random.PCG64(severities))


def simulate_severities(model: CompoundModel, n: int, seed: int) -> np.ndarray:
    """Individual losses drawn from the severity stream of ``seed``."""
    _, rng = _streams(seed)
    return np.exp(model.mu + model.sigma * rng.standard_normal(n))


def simulate_compound(model: CompoundModel, n: int, seed: int, *, return_severities: bool = False):
    """Draw ``n`` aggregate losses S = X_1 + ... + X_N.

    With ``return_severities=True`` the individual losses are returned as a
    second value, in period order.
    """
    if n < 1:
        raise ParameterError(f"n must be at least 1, got {n}")
    count_rng, sev_rng = _streams(seed)
    counts = count_rng.poisson(model.ell, size=n)
    total = int(counts.sum())
    x = np.exp(model.mu + model.sigma * sev_rng.standard_normal(total))
    # per-period sums over contiguous severity blocks
    ends = np.cumsum(counts)
    csum = np.concatenate(([0.0], np.cumsum(x)))
    s = csum[ends] - csum[ends - counts]
    s[counts == 0] = 0.0
    sample = LossSample(s, seed=seed)
    if return_severities:
        return sample, x
    return sample


def load_losses(source: IO | str | bytes, format: str = "csv", header: bool | None = None) -> LossSample:
    """Parse a single-column CSV of losses.

    ``header=None`` auto-detects a non-numeric first record and skips it.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    values = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 1:
            raise LossDataError(f"expected one column, found {len(row)}", lineno)
        cell = row[0].strip()
        try:
            v = float(cell)
        except ValueError:
            if lineno == 1 and header is not False and not values:
                continue
            raise LossDataError(f"not a number: {cell!r}", lineno) from None
        if lineno == 1 and header:
            continue
        if not np.isfinite(v):
            raise LossDataError(f"non-finite loss {cell!r}", lineno)
        if v < 0:
            raise LossDataError(f"negative loss {v}", lineno)
        values.append(v)
    if not values:
        raise LossDataError("empty sample")
    return LossSample(np.array(values))


def write_losses(sample: LossSample | Iterable[float], dest: IO, header: str | None = None) -> None:
    values = sample.values if isinstance(sample, LossSample) else np.asarray(list(sample), dtype=float)
    if header:
        dest.write(header + "\n")
    for v in values:
        dest.write(f"{float(v)!r}\n")


def split_observed_test(sample: LossSample, n_test: int, seed: int) -> tuple[LossSample, LossSample]:
    """Randomly hold out ``n_test`` entries; returns (observed, test)."""
    n = len(sample)
    if n_test < 0 or n_test >= n:
        raise ParameterError(f"n_test must lie in [0, {n}), got {n_test}")
    perm = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed))).permutation(n)
    test_idx = np.sort(perm[:n_test])
    obs_idx = np.sort(perm[n_test:])
    return (
        LossSample(sample.values[obs_idx], seed=sample.seed),
        LossSample(sample.values[test_idx], seed=sample.seed),
    )


def case_data(case: CaseSpec, seed: int, independent_test: bool = True) -> tuple[LossSample, LossSample]:
    """Observed and test samples for a case.

    By default the test set is an independent draw (seed derived from
    ``seed``); otherwise one sample of size n_observed + n_test is split.
    """
    if independent_test:
        obs_seed, test_seed = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2))
        observed = simulate_compound(case.model, case.n_observed, obs_seed)
        test = (
            simulate_compound(case.model, case.n_test, test_seed)
            if case.n_test
            else LossSample(np.empty(0))
        )
        return observed, test
    full = simulate_compound(case.model, case.n_observed + case.n_test, seed)
    return split_observed_test(full, case.n_test, seed)
