import csv
import json

import numpy as np
import pytest

from bivariate_subgroup import __version__, sprint
from bivariate_subgroup.cli import EXIT_INPUT, EXIT_NONCONVERGED, EXIT_OK, build_parser, main
from bivariate_subgroup.config import ConfigError, load_config, parse_config
from bivariate_subgroup.sampler import DrawSet

SCHEME = [{"name": "sex", "levels": ["M", "F"]}, {"name": "age", "levels": ["young", "old"]}]
FAST = {"chains": 2, "iterations": 800, "warmup": 400}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _sprint_cfg(**kw):
    return {"seed": 3, "summary_file": str(sprint.fixture_path()), "output_dir": "out", **kw}


class TestConfig:
    def test_minimal_defaults(self, tmp_path):
        cfg = load_config(_write(tmp_path, {"seed": 1, "patients_file": "p.csv", "scheme": SCHEME}))
        assert cfg.hyperparams.sigma_mu == 100 and cfg.hyperparams.sigma_tau == 1
        s = cfg.sampler
        assert (s.chains, s.iterations, s.warmup) == (4, 1500, 500)
        assert cfg.measures.kappa0 == 3 and cfg.measures.delta == 0.2
        assert cfg.patients_file == str(tmp_path / "p.csv")

    def test_warmup_not_below_iterations(self):
        with pytest.raises(ConfigError, match="warmup"):
            parse_config(_sprint_cfg(sampler={"warmup": 1500, "iterations": 1500}))

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as err:
            parse_config(_sprint_cfg(shrinkage=0.5))
        assert "shrinkage" in str(err.value) and "unknown key" in str(err.value)

    def test_nested_unknown_key(self):
        with pytest.raises(ConfigError, match="sampler.thin"):
            parse_config(_sprint_cfg(sampler={"thin": 2}))

    @pytest.mark.parametrize("raw", [
        {"summary_file": "x.json"},
        {"seed": 1},
        {"seed": 1, "summary_file": "a", "patients_file": "b", "scheme": SCHEME},
        {"seed": 1, "patients_file": "b"},
        {"seed": "one", "summary_file": "a"},
        {"seed": 1, "summary_file": "a", "models": ["cubic"]},
        {"seed": 1, "summary_file": "a", "sampler": {"algorithm": "hmc"}},
    ])
    def test_invalid(self, raw):
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_hash_ignores_output_dir(self):
        a = parse_config(_sprint_cfg())
        b = parse_config(_sprint_cfg(output_dir="elsewhere"))
        c = parse_config(_sprint_cfg(seed=4))
        assert a.config_hash() == b.config_hash() != c.config_hash()

    def test_env_override(self, monkeypatch, tmp_path):
        monkeypatch.setenv("BIVSUB_OUTPUT_DIR", str(tmp_path / "env"))
        assert parse_config(_sprint_cfg()).resolved_output_dir() == tmp_path / "env"


class TestCommands:
    def test_help_lists_defaults(self):
        text = build_parser().format_help()
        assert "iterations=1500" in text and "kappa0=3.0" in text and "BIVSUB_OUTPUT_DIR" in text

    def test_summarize_idempotent(self, tmp_path):
        assert main(["summarize", "--config", _write(tmp_path, _sprint_cfg()), "--quiet"]) == EXIT_OK
        assert (tmp_path / "out" / "summary.json").read_bytes() == sprint.fixture_path().read_bytes()
        prov = json.loads((tmp_path / "out" / "summary.provenance.json").read_text())
        assert prov["version"] == __version__ and len(prov["config_hash"]) == 64

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BIVSUB_OUTPUT_DIR", str(tmp_path / "env"))
        assert main(["summarize", "--config", _write(tmp_path, _sprint_cfg()), "--quiet"]) == EXIT_OK
        assert (tmp_path / "env" / "summary.json").is_file()
        assert not (tmp_path / "out").exists()

    def test_bad_config_exit(self, tmp_path, capsys):
        assert main(["fit", "--config", _write(tmp_path, _sprint_cfg(shrinkage=1))]) == EXIT_INPUT
        assert "shrinkage" in capsys.readouterr().err
        assert main(["fit", "--config", str(tmp_path / "missing.json")]) == EXIT_INPUT

    def test_missing_input(self, tmp_path):
        cfg = {"seed": 1, "summary_file": "nope.json"}
        assert main(["summarize", "--config", _write(tmp_path, cfg), "--quiet"]) == EXIT_INPUT

    def test_measures_need_draws(self, tmp_path):
        assert main(["measures", "--config", _write(tmp_path, _sprint_cfg()), "--quiet"]) == EXIT_INPUT

    @pytest.mark.filterwarnings("ignore:post-warmup acceptance")
    def test_nonconverged_exit(self, tmp_path):
        cfg = _sprint_cfg(sampler={"chains": 2, "iterations": 12, "warmup": 4, "algorithm": "rwm"})
        path = _write(tmp_path, cfg)
        assert main(["fit", "--config", path, "--quiet"]) == EXIT_NONCONVERGED
        assert main(["fit", "--config", path, "--quiet", "--allow-nonconverged"]) == EXIT_OK

    def test_check_without_horizon(self, tmp_path):
        path = _write(tmp_path, _sprint_cfg(sampler=FAST))
        assert main(["fit", "--config", path, "--quiet"]) == EXIT_OK
        assert main(["check", "--config", path, "--quiet"]) == EXIT_INPUT
        cfg = _sprint_cfg(sampler=FAST, checking={"horizon": 4.0, "overlay_replicates": 2})
        assert main(["check", "--config", _write(tmp_path, cfg), "--quiet"]) == EXIT_OK
        ppc = json.loads((tmp_path / "out" / "ppc_saturated.json").read_text())
        assert ppc["ppc"] is None


@pytest.mark.slow
def test_compare_on_sprint(tmp_path):
    cfg = _sprint_cfg(models=["saturated", "additive"], sampler=FAST)
    assert main(["compare", "--config", _write(tmp_path, cfg), "--quiet"]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "compare.json").read_text())
    assert set(report["models"]) == {"saturated", "additive"}
    for row in report["models"].values():
        assert {"dic", "waic"} <= set(row)
    assert report["differences_vs"] == "additive"
    assert "config_hash" in report


def test_simulate_fit_measures_identical_arms(tmp_path):
    rng = np.random.default_rng(0)
    lam = rng.uniform(0.1, 0.4, (2, 4))
    p = rng.uniform(0.1, 0.3, 4)
    (tmp_path / "cells.json").write_text(json.dumps({"lam": [lam.tolist()] * 2, "p": [p.tolist()] * 2}))
    cfg = {"seed": 5, "patients_file": "pat.csv", "output_dir": "out", "scheme": SCHEME,
           "sampler": FAST, "checking": {"replicates": 50, "overlay_replicates": 2},
           "simulate": {"cell_params_file": "cells.json", "n_per_arm": 400}}
    path = _write(tmp_path, cfg)
    for cmd in ("simulate", "fit", "measures", "check"):
        assert main([cmd, "--config", path, "--quiet"]) == EXIT_OK, cmd
    out = tmp_path / "out"
    lines = (out / "forest_saturated.csv").read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    assert any("config_hash" in c for c in comments) and any(__version__ in c for c in comments)
    rows = list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))
    theta4 = [r for r in rows if r["measure"] == "theta4"]
    assert len(theta4) == 4
    assert all(float(r["lo95"]) <= 0 <= float(r["hi95"]) for r in theta4)
    draws = DrawSet.load(out / "draws_saturated.jsonl")
    assert "config_hash" in draws.meta
    ppc = json.loads((out / "ppc_saturated.json").read_text())
    assert len(ppc["ppc"]["arms"]) == 2
    assert (out / "overlay_saturated.csv").read_text().startswith("# config_hash:")
    truth = json.loads((out / "simulation_truth.json").read_text())
    np.testing.assert_allclose(truth["cell_params"]["p"][0], p)
