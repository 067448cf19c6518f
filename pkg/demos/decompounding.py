"""Recovering the individual-loss density from aggregate data alone.

    python demos/decompounding.py

Under Poisson(ell) frequency the aggregate and severity transforms satisfy
psi(alpha) = exp(-ell (1 - phi(alpha))), so phi = ln(psi) / ell + 1.  Feeding
the phi values to either solver gives the density of a single loss.
"""

import logging

import numpy as np
from scipy import stats

from fracmaxent import (
    CASES,
    case_data,
    conditional_moments,
    default_alphas,
    fit_individual,
    fit_mem,
    fit_sme,
    l1_distance,
    maxent_psi,
    severity_moments,
    simulate_compound,
)
from fracmaxent.validation import l1_l2, mae_rmse

logging.getLogger("fracmaxent").setLevel(logging.ERROR)

case = CASES["case1"]
ell = case.model.ell
observed, _ = case_data(case, seed=20240101)
m = conditional_moments(observed, default_alphas(8), ell)
truth = stats.lognorm(case.model.sigma, scale=np.exp(case.model.mu))
_, severities = simulate_compound(case.model, case.n_observed, 7, return_severities=True)

print("sanity check: a degenerate severity X = 1 is recovered exactly")
g = default_alphas(8)
psi = np.exp(-ell * (1 - np.exp(-g.alphas)))
print(f"  max |phi - exp(-alpha)| = {np.max(np.abs(severity_moments(psi, g, ell).phi - np.exp(-g.alphas))):.1e}")

print("\nseverity density from the fitted aggregate densities:")
for name, fit in (("sme", fit_sme(m)), ("mem", fit_mem(m, best_effort=True))):
    psi = maxent_psi(fit, m.grid, ell, atom=m.atom)
    sev = severity_moments(psi, m.grid, ell, psi_stderr=m.stderr * (1 - m.atom))
    d = fit_individual(sev, name, best_effort=True)
    l1, _ = l1_l2(d, severities)
    mae, _ = mae_rmse(d, severities)
    print(f"  {name.upper()}: L1 vs true lognormal {l1_distance(d, truth.pdf):.4f}, "
          f"L1 vs a simulated severity sample {l1:.4f}, MAE {mae:.4f}")
    print(f"        mean {d.moment(1):.4f} (true {truth.mean():.4f}), "
          f"sd {np.sqrt(d.moment(2) - d.moment(1) ** 2):.4f} (true {truth.std():.4f})")
