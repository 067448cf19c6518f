"""Command-line pipeline: simulate, moments, fit, validate, risk, decompound, report.

Every command reads a TOML run configuration (``--config`` or ``--case``)
with optional flag overrides and writes its artifacts into the output
directory, together with ``manifest.json`` (resolved config, its SHA-256,
derived seeds, per-command outputs and timestamps).  Downstream commands
read the artifacts written by upstream ones; ``report`` runs everything.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .decompound import fit_individual, maxent_psi, severity_moments
from .density import DensityOnS, l1_distance
from .mem import MemSolution, fit_mem, interpolate_density
from .model import CASES, CaseSpec, CompoundModel, LossSample, case_data, load_losses, simulate_compound, write_losses
from .moments import FractionalMoments, conditional_moments, default_alphas
from .optimize import SolverOptions
from .risk import GAMMA_LADDER, risk_table, write_risk_csv
from .sme import SmeDensity, density_on_s, fit_sme
from .validation import gof_report, histogram_spec, l1_l2, mae_rmse, write_plot_data

log = logging.getLogger("fracmaxent")

METHODS = ("sme", "mem")


class ConfigError(ValueError):
    pass


class DependencyError(RuntimeError):
    pass


@dataclass
class RunConfig:
    """Everything a run depends on; see ``configs/case1.toml`` for the file layout."""

    case: CaseSpec
    case_name: str = "case1"
    method: str = "both"
    K: int = 8
    alpha_scale: float = 1.5
    atom: str = "sample"
    M: int = 200
    eta: float = 2.0
    tol: float = 1e-8
    moment_tol: float = 1e-6
    max_iter: int = 5000
    best_effort: bool = True
    discrepancy: float = 2.0
    gammas: tuple = GAMMA_LADDER
    B: int = 1000
    frac: float = 0.9
    ci_method: str = "subsampling"
    bins: int | str = "fd"
    max_lag: int = 20
    test_split: str = "independent"
    seed: int = 20240101
    out: str = "runs/case1"
    extra: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.method not in ("sme", "mem", "both"):
            raise ConfigError(f"method must be sme, mem or both, got {self.method!r}")
        if self.K < 1:
            raise ConfigError("K must be at least 1")
        if not self.alpha_scale > 0:
            raise ConfigError("alpha_scale must be positive")
        if self.atom not in ("sample", "model"):
            raise ConfigError("atom must be 'sample' or 'model'")
        if self.M < 2:
            raise ConfigError("M must be at least 2")
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if not all(0 < g < 1 for g in self.gammas) or not self.gammas:
            raise ConfigError("gammas must lie strictly inside (0, 1)")
        if self.B < 100:
            raise ConfigError("B must be at least 100")
        if not 0 < self.frac <= 1:
            raise ConfigError("frac must lie in (0, 1]")
        if self.ci_method not in ("subsampling", "percentile"):
            raise ConfigError("ci_method must be 'subsampling' or 'percentile'")
        if self.bins != "fd" and (not isinstance(self.bins, int) or self.bins < 1):
            raise ConfigError("bins must be 'fd' or a positive integer")
        if self.test_split not in ("independent", "split"):
            raise ConfigError("test_split must be 'independent' or 'split'")
        return self

    @property
    def methods(self) -> tuple:
        return METHODS if self.method == "both" else (self.method,)

    @property
    def grid(self):
        return default_alphas(self.K, self.alpha_scale)

    @property
    def solver(self) -> SolverOptions:
        return SolverOptions(tol=self.tol, moment_tol=self.moment_tol, max_iter=self.max_iter)

    def seeds(self) -> dict:
        """Child seeds derived from the root seed: data, resampling."""
        data, resample = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(self.seed).spawn(2))
        return {"root": self.seed, "data": data, "resample": resample}

    def to_dict(self) -> dict:
        m = self.case.model
        return {
            "case": {"name": self.case_name, "ell": m.ell, "mu": m.mu, "sigma": m.sigma,
                     "n_observed": self.case.n_observed, "n_test": self.case.n_test,
                     "test_split": self.test_split},
            "moments": {"K": self.K, "alpha_scale": self.alpha_scale, "atom": self.atom},
            "solver": {"method": self.method, "tol": self.tol, "moment_tol": self.moment_tol,
                       "max_iter": self.max_iter, "best_effort": self.best_effort,
                       "discrepancy": self.discrepancy},
            "mem": {"M": self.M, "eta": self.eta},
            "validation": {"bins": self.bins, "max_lag": self.max_lag},
            "risk": {"gammas": list(self.gammas), "B": self.B, "frac": self.frac, "ci_method": self.ci_method},
            "seeds": {"root": self.seed},
            "output": {"dir": self.out},
        }

    def sha256(self) -> str:
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"case", "moments", "solver", "mem", "validation", "risk", "seeds", "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        c = dict(d.get("case", {}))
        name = c.get("name", "case1")
        base = CASES.get(name, CASES["case1"])
        try:
            model = CompoundModel(float(c.get("ell", base.model.ell)), float(c.get("mu", base.model.mu)),
                                  float(c.get("sigma", base.model.sigma)))
            case = CaseSpec(model, int(c.get("n_observed", base.n_observed)), int(c.get("n_test", base.n_test)),
                            c.get("label", base.label if name in CASES else name))
        except ValueError as e:
            raise ConfigError(f"[case] {e}") from None
        mo, so, me = d.get("moments", {}), d.get("solver", {}), d.get("mem", {})
        va, ri = d.get("validation", {}), d.get("risk", {})
        cfg = cls(
            case=case,
            case_name=name,
            method=so.get("method", "both"),
            K=int(mo.get("K", 8)),
            alpha_scale=float(mo.get("alpha_scale", 1.5)),
            atom=mo.get("atom", "sample"),
            M=int(me.get("M", 200)),
            eta=float(me.get("eta", 2.0)),
            tol=float(so.get("tol", 1e-8)),
            moment_tol=float(so.get("moment_tol", 1e-6)),
            max_iter=int(so.get("max_iter", 5000)),
            best_effort=bool(so.get("best_effort", True)),
            discrepancy=float(so.get("discrepancy", 2.0)),
            gammas=tuple(float(g) for g in ri.get("gammas", GAMMA_LADDER)),
            B=int(ri.get("B", 1000)),
            frac=float(ri.get("frac", 0.9)),
            ci_method=ri.get("ci_method", "subsampling"),
            bins=va.get("bins", "fd"),
            max_lag=int(va.get("max_lag", 20)),
            test_split=c.get("test_split", "independent"),
            seed=int(d.get("seeds", {}).get("root", 20240101)),
            out=d.get("output", {}).get("dir", f"runs/{name}"),
        )
        return cfg.validate()

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                return cls.from_dict(tomllib.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None


# ------------------------------------------------------------------ artifacts

class Workspace:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = cfg.out
        os.makedirs(self.root, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def require(self, name: str, producer: str) -> str:
        p = self.path(name)
        if not os.path.exists(p):
            raise DependencyError(f"missing {p}; run `{producer}` first")
        return p

    def write_text(self, name: str, text: str) -> str:
        p = self.path(name)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        with open(p, "w", newline="") as fh:
            fh.write(text)
        return p

    def write_json(self, name: str, obj) -> str:
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def record(self, command: str, outputs: list[str]) -> None:
        mpath = self.path("manifest.json")
        manifest = {}
        if os.path.exists(mpath):
            with open(mpath) as fh:
                manifest = json.load(fh)
            if manifest.get("config_sha256") != self.cfg.sha256():
                manifest = {}
        manifest.update({
            "package_version": __version__,
            "config": self.cfg.to_dict(),
            "config_sha256": self.cfg.sha256(),
            "seeds": self.cfg.seeds(),
        })
        manifest.setdefault("commands", {})[command] = {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "outputs": sorted(os.path.relpath(p, self.root) for p in outputs),
        }
        with open(mpath, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    # loaders
    def sample(self, name: str = "sample.csv") -> LossSample:
        with open(self.require(name, "simulate")) as fh:
            return load_losses(fh)

    def moments(self) -> FractionalMoments:
        with open(self.require("moments.json", "moments")) as fh:
            return FractionalMoments.from_json(fh.read())

    def fit(self, method: str):
        with open(self.require(f"fit_{method}.json", "fit")) as fh:
            text = fh.read()
        return SmeDensity.from_json(text) if method == "sme" else MemSolution.from_json(text)

    def density(self, method: str) -> DensityOnS:
        fit = self.fit(method)
        return density_on_s(fit) if method == "sme" else interpolate_density(fit)


def _csv_text(sample) -> str:
    import io

    buf = io.StringIO()
    write_losses(sample, buf, header="loss")
    return buf.getvalue()


def _density_csv(d: DensityOnS, n: int = 1001) -> str:
    import io

    buf = io.StringIO()
    d.to_csv(np.linspace(0.0, d.upper(1e-10), n), buf)
    return buf.getvalue()


# ------------------------------------------------------------------- commands

def cmd_simulate(cfg: RunConfig) -> list[str]:
    ws = Workspace(cfg)
    seeds = cfg.seeds()
    observed, test = case_data(cfg.case, seeds["data"], independent_test=cfg.test_split == "independent")
    # individual losses of a separate run, for severity comparisons
    _, severities = simulate_compound(cfg.case.model, cfg.case.n_observed, seeds["data"], return_severities=True)
    outs = [ws.write_text("sample.csv", _csv_text(observed)),
            ws.write_text("test.csv", _csv_text(test)),
            ws.write_text("severities.csv", _csv_text(severities))]
    ws.record("simulate", outs)
    return outs


def cmd_moments(cfg: RunConfig) -> list[str]:
    ws = Workspace(cfg)
    m = conditional_moments(ws.sample(), cfg.grid, cfg.case.model.ell, atom=cfg.atom)
    outs = [ws.write_text("moments.json", m.to_json() + "\n")]
    ws.record("moments", outs)
    return outs


def cmd_fit(cfg: RunConfig) -> list[str]:
    ws = Workspace(cfg)
    m = ws.moments()
    outs = []
    for method in cfg.methods:
        if method == "sme":
            fit = fit_sme(m, cfg.solver, best_effort=cfg.best_effort, discrepancy=cfg.discrepancy)
            d = density_on_s(fit)
        else:
            fit = fit_mem(m, cfg.M, cfg.eta, cfg.solver, best_effort=cfg.best_effort, discrepancy=cfg.discrepancy)
            d = interpolate_density(fit)
        outs.append(ws.write_text(f"fit_{method}.json", fit.to_json() + "\n"))
        outs.append(ws.write_text(f"density_{method}.csv", _density_csv(d)))
    ws.record("fit", outs)
    return outs


def cmd_validate(cfg: RunConfig) -> list[str]:
    ws = Workspace(cfg)
    observed, test = ws.sample(), ws.sample("test.csv")
    bins = histogram_spec(observed, None if cfg.bins == "fd" else cfg.bins)
    outs = []
    for method in cfg.methods:
        d = ws.density(method)
        rep = gof_report(d, observed, test, bins, cfg.max_lag)
        outs.append(ws.write_text(f"gof_{method}.json", rep.to_json() + "\n"))
        outs += write_plot_data(rep, d, observed, ws.path("plotdata"), prefix=f"{method}_", bins=bins)
    ws.record("validate", outs)
    return outs


def cmd_risk(cfg: RunConfig) -> list[str]:
    ws = Workspace(cfg)
    observed = ws.sample()
    dens = {m: ws.density(m) for m in cfg.methods}
    rows = risk_table(dens, observed, cfg.gammas, B=cfg.B, frac=cfg.frac, seed=cfg.seeds()["resample"],
                      ci_method=cfg.ci_method)
    outs = []
    for measure in ("var", "tvar"):
        p = ws.path(f"risk_{measure}.csv")
        write_risk_csv(rows, measure, p)
        outs.append(p)
    ws.record("risk", outs)
    return outs


def cmd_decompound(cfg: RunConfig) -> list[str]:
    from scipy import stats

    ws = Workspace(cfg)
    m = ws.moments()
    ell = cfg.case.model.ell
    sev_sample = None
    if os.path.exists(ws.path("severities.csv")):
        sev_sample = ws.sample("severities.csv")
    true = stats.lognorm(cfg.case.model.sigma, scale=np.exp(cfg.case.model.mu)).pdf
    psi_se = None if m.stderr is None else m.stderr * (1 - (m.atom or 0.0))
    outs, summary = [], {}
    for method in cfg.methods:
        psi = maxent_psi(ws.fit(method), m.grid, ell, atom=m.atom)
        sev = severity_moments(psi, m.grid, ell, source="maxent", psi_stderr=psi_se)
        d = fit_individual(sev, method, cfg.solver, cfg.M, cfg.eta, best_effort=cfg.best_effort)
        row = {"phi": sev.phi.tolist(), "l1_vs_true": l1_distance(d, true)}
        if sev_sample is not None:
            l1, l2 = l1_l2(d, sev_sample)
            mae, rmse = mae_rmse(d, sev_sample)
            row.update({"l1_vs_sample": l1, "l2_vs_sample": l2, "mae": mae, "rmse": rmse})
        summary[method] = row
        outs.append(ws.write_text(f"severity_{method}.csv", _density_csv(d)))
    outs.append(ws.write_json("severity_summary.json", summary))
    ws.record("decompound", outs)
    return outs


def _fmt_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return "\n".join(lines)


def cmd_report(cfg: RunConfig) -> list[str]:
    outs = []
    for step in (cmd_simulate, cmd_moments, cmd_fit, cmd_validate, cmd_risk, cmd_decompound):
        outs += step(cfg)
    ws = Workspace(cfg)
    gof = {}
    for method in cfg.methods:
        with open(ws.path(f"gof_{method}.json")) as fh:
            gof[method] = json.load(fh)
    with open(ws.path("severity_summary.json")) as fh:
        sev = json.load(fh)
    fits = {m: ws.fit(m) for m in cfg.methods}

    parts = [f"# {cfg.case.label or cfg.case_name}: ell={cfg.case.model.ell:g}, mu={cfg.case.model.mu:g}, "
             f"sigma={cfg.case.model.sigma:g}", ""]
    parts += ["## Reconstruction errors (observed sample)", "",
              _fmt_table(["method", "L1", "L2", "MAE", "RMSE", "converged", "iterations"],
                         [[m.upper(), f"{g['l1']:.4f}", f"{g['l2']:.4f}", f"{g['mae']:.4f}", f"{g['rmse']:.4f}",
                           fits[m].converged, fits[m].iterations] for m, g in gof.items()]), ""]
    tests = ["ks", "ad", "cvm", "berkowitz_lr3", "jb", "rjb"]
    parts += ["## Test-set statistics (* rejected at 5%, ** at 1%)", "",
              _fmt_table(["method"] + tests,
                         [[m.upper()] + [f"{g[t]['statistic']:.3f}" + ("**" if g[t]["reject"]["99"] else
                                                                      "*" if g[t]["reject"]["95"] else "")
                                         for t in tests] for m, g in gof.items()]), ""]
    for measure in ("var", "tvar"):
        with open(ws.path(f"risk_{measure}.csv")) as fh:
            lines = [ln.strip().split(",") for ln in fh if ln.strip()]
        parts += [f"## {measure.upper()}", "", _fmt_table(lines[0], lines[1:]), ""]
    parts += ["## Individual losses", "",
              _fmt_table(["method", "L1 vs true", "L1 vs sample", "MAE vs sample"],
                         [[m.upper(), f"{r['l1_vs_true']:.4f}", f"{r.get('l1_vs_sample', float('nan')):.4f}",
                           f"{r.get('mae', float('nan')):.4f}"] for m, r in sev.items()]), ""]
    outs.append(ws.write_text("report.md", "\n".join(parts)))
    ws.record("report", outs)
    return outs


COMMANDS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "fit": cmd_fit,
    "validate": cmd_validate,
    "risk": cmd_risk,
    "decompound": cmd_decompound,
    "report": cmd_report,
}


# ------------------------------------------------------------------ arguments

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracmaxent", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--case", help="built-in case name (case1..case5) or a TOML config path")
    p.add_argument("--method", choices=("sme", "mem", "both"))
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--gammas", help="comma-separated confidence levels")
    p.add_argument("--bins", help="histogram bin count or 'fd'")
    p.add_argument("--M", type=int, help="MEM partition size")
    p.add_argument("--eta", type=float, help="MEM Poisson reference intensity")
    p.add_argument("--K", type=int, help="number of fractional moments")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    source = args.config
    base: dict = {}
    if args.case and (args.case.endswith(".toml") or os.path.exists(args.case)):
        if source:
            raise ConfigError("give either --config or a config path in --case, not both")
        source = args.case
    if source:
        try:
            with open(source, "rb") as fh:
                base = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {source}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{source}: {e}") from None
    elif args.case:
        if args.case not in CASES:
            raise ConfigError(f"unknown case {args.case!r}; expected one of {sorted(CASES)} or a .toml path")
        base = {"case": {"name": args.case}}
    for sec in ("case", "moments", "solver", "mem", "validation", "risk", "seeds", "output"):
        base.setdefault(sec, {})
    if args.method:
        base["solver"]["method"] = args.method
    if args.seed is not None:
        base["seeds"]["root"] = args.seed
    if args.out:
        base["output"]["dir"] = args.out
    if args.gammas:
        try:
            base["risk"]["gammas"] = [float(g) for g in args.gammas.split(",") if g.strip()]
        except ValueError:
            raise ConfigError(f"--gammas: not a list of numbers: {args.gammas!r}") from None
    if args.bins:
        try:
            base["validation"]["bins"] = args.bins if args.bins == "fd" else int(args.bins)
        except ValueError:
            raise ConfigError(f"--bins: expected an integer or 'fd', got {args.bins!r}") from None
    if args.M is not None:
        base["mem"]["M"] = args.M
    if args.eta is not None:
        base["mem"]["eta"] = args.eta
    if args.K is not None:
        base["moments"]["K"] = args.K
    return RunConfig.from_dict(base)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        outs = COMMANDS[args.command](cfg)
    except (ConfigError, DependencyError) as e:
        print(f"error [{args.command}]: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # surfaced with module context
        module = getattr(type(e), "__module__", "?").rsplit(".", 1)[-1]
        print(f"error [{args.command}/{module}] {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    for p in outs:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
