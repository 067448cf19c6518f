import logging
import os

import numpy as np
import pytest

from fracmaxent.cli import RunConfig
from fracmaxent.mem import fit_mem, interpolate_density
from fracmaxent.model import case_data
from fracmaxent.moments import conditional_moments
from fracmaxent.sme import density_on_s, fit_sme

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

logging.getLogger("fracmaxent").setLevel(logging.ERROR)


def load_case(name: str) -> RunConfig:
    return RunConfig.from_file(os.path.join(CONFIGS, f"{name}.toml"))


class CaseRun:
    """Data, moments and both fits for one configured case, built lazily."""

    def __init__(self, name: str):
        self.cfg = load_case(name)
        self.observed, self.test = case_data(self.cfg.case, self.cfg.seeds()["data"])
        self.moments = conditional_moments(self.observed, self.cfg.grid, self.cfg.case.model.ell, atom=self.cfg.atom)
        self._sme = self._mem = None

    @property
    def sme(self):
        if self._sme is None:
            self._sme = fit_sme(self.moments, self.cfg.solver, best_effort=True)
        return self._sme

    @property
    def mem(self):
        if self._mem is None:
            self._mem = fit_mem(self.moments, self.cfg.M, self.cfg.eta, self.cfg.solver, best_effort=True)
        return self._mem

    @property
    def sme_density(self):
        return density_on_s(self.sme)

    @property
    def mem_density(self):
        return interpolate_density(self.mem)


_RUNS = {}


def case_run(name: str) -> CaseRun:
    if name not in _RUNS:
        _RUNS[name] = CaseRun(name)
    return _RUNS[name]


@pytest.fixture(scope="session")
def case1():
    return case_run("case1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
