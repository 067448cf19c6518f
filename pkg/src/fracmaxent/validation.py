"""Goodness-of-fit measures and tests for a fitted loss density.

Distances (L1, L2) compare the fitted density with a histogram of the data,
MAE/RMSE compare CDFs at the sample points, and the test battery works on
the probability integral transform p_j = F*(s_j).  Decisions use fixed
critical values; no p-values are computed.

Phi and its inverse come from ``scipy.special`` (ndtr / ndtri), which are
accurate to a few ulp over the clamped range used here.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special

from .density import DensityOnS
from .model import LossSample
from .quadrature import panel_rule

CRITICAL = {
    "ks": {"90": 1.22, "95": 1.36, "99": 1.63},
    "ad": {"95": 2.492, "99": 3.857},
    "cvm": {"95": 0.461, "99": 0.743},
    "berkowitz_lr3": {"95": 7.815, "99": 11.34},
    "jb": {"95": 5.991, "99": 9.21},
    "rjb": {"95": 5.991, "99": 9.21},
}
PIT_CLAMP = 1e-10
RJB_C1, RJB_C2 = 6.0, 64.0


def _values(sample) -> np.ndarray:
    v = sample.values if isinstance(sample, LossSample) else np.asarray(sample, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty sample")
    return v


def _positive(sample) -> np.ndarray:
    v = _values(sample)
    v = v[v > 0]
    if v.size == 0:
        raise ValueError("sample has no positive losses")
    return v


def _cdf_of(cdf) -> Callable:
    return cdf.cdf if isinstance(cdf, DensityOnS) else cdf


@dataclass(frozen=True)
class Decision:
    statistic: float
    critical: dict
    reject: dict

    @classmethod
    def at(cls, name: str, statistic: float) -> "Decision":
        crit = CRITICAL[name]
        return cls(float(statistic), dict(crit), {lvl: bool(statistic > cv) for lvl, cv in crit.items()})


# ---------------------------------------------------------------- histograms

@dataclass(frozen=True)
class HistogramSpec:
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float).ravel()
        if e.size < 2 or np.any(np.diff(e) <= 0):
            raise ValueError("bin edges must be strictly increasing with at least one bin")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def G(self) -> int:
        return self.edges.size - 1

    def density(self, sample) -> np.ndarray:
        """Histogram density f_n on each bin (counts / (n * width))."""
        v = _values(sample)
        counts, _ = np.histogram(v, self.edges)
        return counts / (v.size * np.diff(self.edges))


def histogram_spec(sample, bins: int | str | None = None) -> HistogramSpec:
    """Equal-width bins over [min, max] of the positive sample.

    ``bins`` is a bin count, or None / "fd" for the Freedman-Diaconis rule.
    """
    v = _positive(sample)
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        hi = lo + 1.0
    if bins is None or bins == "fd":
        q75, q25 = np.percentile(v, [75, 25])
        h = 2.0 * (q75 - q25) / v.size ** (1.0 / 3.0)
        G = max(1, int(np.ceil((hi - lo) / h))) if h > 0 else 1
    else:
        G = int(bins)
        if G < 1:
            raise ValueError("bin count must be positive")
    return HistogramSpec(np.linspace(lo, hi, G + 1))


# ------------------------------------------------------------ distances/errors

def l1_l2(density: DensityOnS, sample, bins: HistogramSpec | None = None, order: int = 32) -> tuple[float, float]:
    """L1 and L2 distances between the fitted density and the histogram.

    Bin integrals use Gauss-Legendre on each bin; the part beyond the last
    edge is the fitted tail (integrated to where F* > 1 - 1e-10).  Mass below
    the first edge is not counted, matching the usual histogram-based form.
    """
    v = _positive(sample)
    bins = bins or histogram_spec(v)
    fn = bins.density(v)
    r = panel_rule(bins.edges, order)
    diff = density.pdf(r.nodes) - np.repeat(fn, order)
    l1 = r.integrate(np.abs(diff))
    l2sq = r.integrate(diff**2)
    top = bins.edges[-1]
    l1 += float(density.sf(top))
    s_max = density.upper(1e-10)
    if s_max > top:
        t = panel_rule(np.linspace(top, s_max, max(8, int(np.ceil(4 * (s_max - top)))) + 1), order)
        l2sq += t.integrate(density.pdf(t.nodes) ** 2)
    return float(l1), float(np.sqrt(l2sq))


def empirical_cdf_at_sample(sample) -> tuple[np.ndarray, np.ndarray]:
    """Sorted sample and the right-continuous ECDF evaluated there."""
    s = np.sort(_values(sample))
    return s, np.searchsorted(s, s, side="right") / s.size


def mae_rmse(cdf, sample) -> tuple[float, float]:
    s, Fn = empirical_cdf_at_sample(sample)
    d = np.asarray(_cdf_of(cdf)(s), dtype=float) - Fn
    return float(np.mean(np.abs(d))), float(np.sqrt(np.mean(d**2)))


def pit(cdf, sample) -> np.ndarray:
    """Probability integral transform p_j = F*(s_j), in sample order."""
    return np.clip(np.asarray(_cdf_of(cdf)(_values(sample)), dtype=float), 0.0, 1.0)


# -------------------------------------------------------------------- EDF tests

def _sorted_pit(p) -> np.ndarray:
    p = np.sort(np.asarray(p, dtype=float).ravel())
    if p.size == 0:
        raise ValueError("empty PIT")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("PIT values must lie in [0, 1]")
    return p


def ks_statistic(p) -> float:
    """sqrt(n) * D_n, D_n taken over both sides of every ECDF step."""
    p = _sorted_pit(p)
    n = p.size
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - p), np.max(p - (i - 1) / n))
    return float(np.sqrt(n) * d)


def ad_statistic(p) -> float:
    p = np.clip(_sorted_pit(p), PIT_CLAMP, 1 - PIT_CLAMP)
    n = p.size
    i = np.arange(1, n + 1)
    return float(-n - np.sum((2 * i - 1) * (np.log(p) + np.log1p(-p[::-1]))) / n)


def cvm_statistic(p) -> float:
    p = _sorted_pit(p)
    n = p.size
    i = np.arange(1, n + 1)
    return float(1.0 / (12 * n) + np.sum((p - (2 * i - 1) / (2 * n)) ** 2))


# -------------------------------------------------------------- Berkowitz LR3

def ar1_loglik(z, mu: float, sigma2: float, rho: float) -> float:
    """Exact Gaussian AR(1) log-likelihood: stationary first term plus T-1 conditionals."""
    z = np.asarray(z, dtype=float)
    T = z.size
    v1 = sigma2 / (1 - rho**2)
    first = -0.5 * np.log(2 * np.pi * v1) - (z[0] - mu / (1 - rho)) ** 2 / (2 * v1)
    e = z[1:] - mu - rho * z[:-1]
    rest = -0.5 * (T - 1) * np.log(2 * np.pi * sigma2) - np.sum(e**2) / (2 * sigma2)
    return float(first + rest)


def _ar1_mle(z: np.ndarray) -> tuple[float, float, float, float]:
    x, y = z[:-1], z[1:]
    X = np.column_stack([np.ones_like(x), x])
    (c, r), *_ = np.linalg.lstsq(X, y, rcond=None)
    r = float(np.clip(r, -0.99, 0.99))
    s2 = max(float(np.var(y - c - r * x)), 1e-8)
    theta0 = np.array([c, np.log(s2), np.arctanh(r)])

    def nll(th):
        return -ar1_loglik(z, th[0], np.exp(th[1]), np.tanh(th[2]))

    res = optimize.minimize(nll, theta0, method="BFGS")
    th = res.x if res.fun <= nll(theta0) else theta0
    return th[0], float(np.exp(th[1])), float(np.tanh(th[2])), -float(min(res.fun, nll(theta0)))


def berkowitz_lr3(p) -> float:
    """LR_3 = -2 (L(0, 1, 0) - L(mu_hat, sigma2_hat, rho_hat)) on z = Phi^-1(p)."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size < 8:
        raise ValueError("Berkowitz test needs at least 8 points")
    z = special.ndtri(np.clip(p, PIT_CLAMP, 1 - PIT_CLAMP))
    *_, lmax = _ar1_mle(z)
    return float(max(0.0, -2.0 * (ar1_loglik(z, 0.0, 1.0, 0.0) - lmax)))


# --------------------------------------------------------------- normality

def _central(z: np.ndarray):
    d = z - z.mean()
    return np.mean(d**2), np.mean(d**3), np.mean(d**4)


def jarque_bera(z) -> float:
    z = np.asarray(z, dtype=float).ravel()
    n = z.size
    m2, m3, m4 = _central(z)
    if m2 <= 0:
        raise ValueError("zero variance")
    sw = m3 / m2**1.5
    k = m4 / m2**2
    return float(n / 6.0 * (sw**2 + (k - 3) ** 2 / 4.0))


def robust_jarque_bera(z) -> float:
    """RJB with J_n = sqrt(pi/2) * mean |z - median| in place of the standard deviation."""
    z = np.asarray(z, dtype=float).ravel()
    n = z.size
    _, m3, m4 = _central(z)
    J = np.sqrt(np.pi / 2) * np.mean(np.abs(z - np.median(z)))
    if J <= 0:
        raise ValueError("zero dispersion")
    return float(n / RJB_C1 * (m3 / J**3) ** 2 + n / RJB_C2 * (m4 / J**4 - 3) ** 2)


def pit_to_normal(p) -> np.ndarray:
    return special.ndtri(np.clip(np.asarray(p, dtype=float), PIT_CLAMP, 1 - PIT_CLAMP))


# ------------------------------------------------------------- correlograms

def acf(x, max_lag: int) -> np.ndarray | None:
    """Autocorrelations at lags 1..max_lag; None for a constant series.

    Lag-h autocovariances are averaged over the n - h available pairs, so an
    exactly periodic series has autocorrelation 1 at its period.
    """
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    var = np.mean(d**2)
    if var <= 1e-300 * max(1.0, np.max(np.abs(x)) ** 2) or not np.isfinite(var):
        return None
    n = d.size
    lags = np.arange(1, min(max_lag, n - 1) + 1)
    return np.array([np.dot(d[:-h], d[h:]) / (n - h) for h in lags]) / var


def correlograms(p, max_lag: int = 20) -> dict:
    """ACFs of (p - mean)^k for k = 1, 2, 3 with the +-1.96/sqrt(n) band."""
    p = np.asarray(p, dtype=float).ravel()
    c = p - p.mean()
    out = {"band": 1.96 / np.sqrt(p.size), "lags": list(range(1, min(max_lag, p.size - 1) + 1))}
    for k in (1, 2, 3):
        r = acf(c**k, max_lag)
        out[f"power{k}"] = {"acf": None if r is None else r.tolist(), "zero_variance": r is None}
    return out


# -------------------------------------------------------- calibration points

def reliability_points(cdf, sample) -> np.ndarray:
    """Columns (F_n(s_j), F*(s_j)) over the sorted sample."""
    s, Fn = empirical_cdf_at_sample(sample)
    return np.column_stack([Fn, _cdf_of(cdf)(s)])


def marginal_calibration_points(cdf, sample) -> np.ndarray:
    """Columns (s_j, F*(s_j) - F_n(s_j)) over the sorted sample."""
    s, Fn = empirical_cdf_at_sample(sample)
    return np.column_stack([s, _cdf_of(cdf)(s) - Fn])


# ------------------------------------------------------------------ reports

@dataclass
class GofReport:
    label: str
    n_observed: int
    n_test: int
    bins: int
    l1: float
    l2: float
    mae: float
    rmse: float
    max_abs_cdf_diff: float
    ks: Decision
    ad: Decision
    cvm: Decision
    berkowitz_lr3: Decision
    jb: Decision
    rjb: Decision
    acf: dict = field(repr=False)
    pit: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pit"] = self.pit.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def gof_report(density: DensityOnS, observed, test, bins: HistogramSpec | int | None = None,
               max_lag: int = 20) -> GofReport:
    """Distances and errors on the observed sample, test battery on the test sample.

    Both samples are restricted to positive losses.
    """
    obs = _positive(observed)
    tst = _positive(test)
    spec = bins if isinstance(bins, HistogramSpec) else histogram_spec(obs, bins)
    l1, l2 = l1_l2(density, obs, spec)
    mae, rmse = mae_rmse(density, obs)
    cal = marginal_calibration_points(density, obs)
    p = pit(density, tst)
    z = pit_to_normal(p)
    return GofReport(
        label=density.label,
        n_observed=int(obs.size),
        n_test=int(tst.size),
        bins=spec.G,
        l1=l1, l2=l2, mae=mae, rmse=rmse,
        max_abs_cdf_diff=float(np.max(np.abs(cal[:, 1]))),
        ks=Decision.at("ks", ks_statistic(p)),
        ad=Decision.at("ad", ad_statistic(p)),
        cvm=Decision.at("cvm", cvm_statistic(p)),
        berkowitz_lr3=Decision.at("berkowitz_lr3", berkowitz_lr3(p)),
        jb=Decision.at("jb", jarque_bera(z)),
        rjb=Decision.at("rjb", robust_jarque_bera(z)),
        acf=correlograms(p, max_lag),
        pit=p,
    )


def _write_rows(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_plot_data(report: GofReport, density: DensityOnS, observed, outdir: str,
                    prefix: str = "", pit_bins: int = 20, bins: HistogramSpec | None = None) -> list[str]:
    """Tidy CSVs for PIT histogram, ACFs, reliability, calibration and density overlay."""
    os.makedirs(outdir, exist_ok=True)
    obs = _positive(observed)
    spec = bins or histogram_spec(obs, report.bins)
    paths = []

    def path(name):
        p = os.path.join(outdir, f"{prefix}{name}.csv")
        paths.append(p)
        return p

    counts, edges = np.histogram(report.pit, np.linspace(0, 1, pit_bins + 1))
    _write_rows(path("pit_hist"), ["bin_lo", "bin_hi", "count"], zip(edges[:-1], edges[1:], counts))

    rows = []
    for k in (1, 2, 3):
        r = report.acf[f"power{k}"]["acf"]
        if r is not None:
            rows += [(k, lag, a, report.acf["band"]) for lag, a in zip(report.acf["lags"], r)]
    _write_rows(path("acf"), ["power", "lag", "acf", "band"], rows)

    _write_rows(path("reliability"), ["empirical_cdf", "model_cdf"], reliability_points(density, obs))
    _write_rows(path("calibration"), ["s", "model_minus_empirical"], marginal_calibration_points(density, obs))

    lo, hi = spec.edges[:-1], spec.edges[1:]
    mid = 0.5 * (lo + hi)
    _write_rows(path("density_overlay"), ["bin_lo", "bin_hi", "histogram_density", "model_pdf_mid"],
                zip(lo, hi, spec.density(obs), density.pdf(mid)))
    return paths
