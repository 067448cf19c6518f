import csv
import json
import os

import numpy as np
import pytest

from fracmaxent.cli import ConfigError, RunConfig, main
from fracmaxent.moments import FractionalMoments, default_alphas

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")

SMALL = """
[case]
name = "small"
ell = 3.0
mu = 0.0
sigma = 0.25
n_observed = 2000
n_test = 1500

[risk]
B = 100

[seeds]
root = 7
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return str(p)


def run(*argv):
    return main([str(a) for a in argv])


def artifacts(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            if f != "manifest.json":
                p = os.path.join(dirpath, f)
                with open(p, "rb") as fh:
                    out[os.path.relpath(p, root)] = fh.read()
    return out


class TestConfig:
    @pytest.mark.parametrize("name", ["case1", "case2", "case3", "case4", "case5"])
    def test_checked_in_configs(self, name):
        cfg = RunConfig.from_file(os.path.join(CONFIG_DIR, f"{name}.toml"))
        assert cfg.case_name == name
        assert cfg.K == 8 and cfg.M == 200 and cfg.eta == 2.0
        assert len(cfg.gammas) == 12

    def test_roundtrip_and_hash(self):
        cfg = RunConfig.from_file(os.path.join(CONFIG_DIR, "case1.toml"))
        again = RunConfig.from_dict(cfg.to_dict())
        assert again.sha256() == cfg.sha256()
        assert again.seeds() == cfg.seeds()

    def test_hash_ignores_output(self):
        d = RunConfig.from_file(os.path.join(CONFIG_DIR, "case1.toml")).to_dict()
        a = RunConfig.from_dict(d)
        d["output"]["dir"] = "elsewhere"
        assert RunConfig.from_dict(d).sha256() == a.sha256()

    @pytest.mark.parametrize("patch", [
        {"solver": {"method": "both2"}},
        {"moments": {"K": 0}},
        {"mem": {"M": 1}},
        {"mem": {"eta": 0}},
        {"risk": {"gammas": [0.5, 1.0]}},
        {"risk": {"B": 10}},
        {"case": {"sigma": -1}},
        {"bogus": {}},
    ])
    def test_invalid(self, patch):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(patch)

    def test_seed_derivation(self):
        a = RunConfig.from_dict({"seeds": {"root": 1}}).seeds()
        b = RunConfig.from_dict({"seeds": {"root": 2}}).seeds()
        assert a["data"] != a["resample"] and a["data"] != b["data"]


class TestCommands:
    def test_missing_dependency(self, tmp_path, capsys):
        assert run("fit", "--case", "case1", "--out", tmp_path) == 2
        assert "moments.json" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        assert run("simulate", "--case", "case9", "--out", tmp_path) == 2
        assert run("simulate", "--case", "case1", "--bins", "many", "--out", tmp_path) == 2
        assert run("simulate", "--config", tmp_path / "none.toml") == 2

    def test_module_error_context(self, tmp_path, capsys):
        (tmp_path / "sample.csv").write_text("loss\n-1\n")
        assert run("moments", "--case", "case1", "--out", tmp_path) == 1
        assert "model" in capsys.readouterr().err

    def test_fit_uniform_moments(self, tmp_path):
        g = default_alphas(8)
        m = FractionalMoments(g, 1 / (g.alphas + 1), stderr=np.zeros(9))
        (tmp_path / "moments.json").write_text(m.to_json())
        assert run("fit", "--case", "case1", "--method", "sme", "--out", tmp_path) == 0
        fit = json.loads((tmp_path / "fit_sme.json").read_text())
        assert np.max(np.abs(fit["lambda"][1:])) <= 1e-4
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert "fit_sme.json" in manifest["commands"]["fit"]["outputs"]
        assert manifest["config"]["solver"]["method"] == "sme"

    def test_pipeline_byte_identical(self, small_config, tmp_path):
        for sub in ("a", "b"):
            assert run("report", "--config", small_config, "--out", tmp_path / sub) == 0
        a, b = artifacts(tmp_path / "a"), artifacts(tmp_path / "b")
        assert set(a) == set(b)
        assert a == b
        expected = {"sample.csv", "test.csv", "severities.csv", "moments.json", "fit_sme.json", "fit_mem.json",
                    "density_sme.csv", "density_mem.csv", "gof_sme.json", "gof_mem.json", "risk_var.csv",
                    "risk_tvar.csv", "severity_sme.csv", "severity_mem.csv", "severity_summary.json", "report.md"}
        assert expected <= set(a)
        assert any(k.startswith("plotdata") for k in a)
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert set(manifest["commands"]) >= {"simulate", "moments", "fit", "validate", "risk", "decompound", "report"}
        assert manifest["seeds"]["root"] == 7

    def test_seed_flag_changes_data(self, small_config, tmp_path):
        run("simulate", "--config", small_config, "--out", tmp_path / "a")
        run("simulate", "--config", small_config, "--seed", 8, "--out", tmp_path / "b")
        assert (tmp_path / "a" / "sample.csv").read_bytes() != (tmp_path / "b" / "sample.csv").read_bytes()

    def test_gamma_ladder_rows(self, small_config, tmp_path):
        out = tmp_path / "r"
        for cmd in ("simulate", "moments", "fit"):
            assert run(cmd, "--config", small_config, "--method", "sme", "--out", out) == 0
        ladder = "0.9,0.91,0.92,0.93,0.94,0.95,0.96,0.97,0.98,0.99,0.995,0.999"
        assert run("risk", "--config", small_config, "--method", "sme", "--gammas", ladder, "--out", out) == 0
        with open(out / "risk_var.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["gamma"] for r in rows] == [f"{float(g):.3f}" for g in ladder.split(",")]
        assert set(rows[0]) == {"gamma", "sme", "empirical", "sme_error", "ci_lo", "ci_hi", "sme_in_ci"}
