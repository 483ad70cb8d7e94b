from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gcnpac import bound_engine as be
from gcnpac.harness import cli, suites
from gcnpac.harness.config import ConfigError, ExperimentConfig, component_seeds, load_config

GOLDEN = Path(__file__).parent / "golden"

SMALL = {
    "graph": {"n": 32},
    "model": {"epochs": 20, "n_weight_samples": 4},
    "run": {"seeds": [0, 1], "sweep": [64, 128]},
}


def write_config(tmp_path: Path, doc: dict, name: str = "cfg.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    out = tmp_path / "out"
    monkeypatch.setenv(cli.OUTPUT_ENV, str(out))
    return out


# ---------------------------------------------------------------- configuration


def test_default_config_round_trip():
    cfg = ExperimentConfig()
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert load_config(None) == cfg


@pytest.mark.parametrize(
    "section,key,value,field",
    [
        ("chain", "alphas", [0.1, 1.5, 0.3], "chain.alphas"),
        ("chain", "p", [0.5, 0.6, -0.1], "chain.p"),
        ("graph", "family", "grid", "graph.family"),
        ("graph", "n", 1, "graph.n"),
        ("model", "c_w", 0, "model.c_w"),
        ("model", "alpha_renyi", 1.0, "model.alpha_renyi"),
        ("bound", "delta", 1.0, "bound.delta"),
        ("bound", "gamma_norm", "fro", "bound.gamma_norm"),
        ("run", "sweep", [64, 1], "run.sweep"),
        ("run", "sweep", [], "run.sweep"),
        ("model", "colour", 3, "model.colour"),
    ],
)
def test_validation_names_field(section, key, value, field):
    doc = ExperimentConfig().to_dict()
    doc[section][key] = value
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(doc)
    assert info.value.field == field


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"chain": {}, "extras": {}})


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "chain": {\n    "p": [0.2, 0.8,]\n  }\n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert "line 3" in str(info.value)


def test_component_seeds_independent_and_stable():
    a = component_seeds(0, 5)
    assert a == component_seeds(0, 5)
    assert len(set(a.values())) == len(a)
    assert a != component_seeds(0, 6)
    assert a != component_seeds(1, 5)


# ---------------------------------------------------------------- verify


def test_verify_default_passes(capsys):
    assert cli.main(["verify"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["passed"] is True
    assert {c["module"] for c in doc["checks"]} == set(suites.SUITES)


def test_verify_only_filters(capsys):
    assert cli.main(["verify", "--only", "markov_core"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert {c["module"] for c in doc["checks"]} == {"markov_core"}


def test_verify_unknown_module_is_config_error(capsys):
    assert cli.main(["verify", "--only", "nonsense"]) == 2
    assert "--only" in capsys.readouterr().err


def test_verify_bad_alpha_exit_two(tmp_path, capsys):
    path = write_config(tmp_path, {"chain": {"alphas": [0.1, 1.5, 0.3]}})
    assert cli.main(["verify", "--config", path]) == 2
    assert "chain.alphas" in capsys.readouterr().err


def test_verify_failure_exit_one(monkeypatch, capsys):
    def failing(cfg):
        return [suites.CheckResult("markov_core", "always fails", False, "forced")]

    monkeypatch.setitem(suites.SUITES, "markov_core", failing)
    assert cli.main(["verify", "--only", "markov_core"]) == 1
    assert json.loads(capsys.readouterr().out)["passed"] is False


def test_crashing_check_counts_as_failure():
    def boom():
        raise RuntimeError("broken")

    res = suites._check("x", "crash", boom)
    assert not res.passed and "broken" in res.detail


# ---------------------------------------------------------------- sweep


def test_sweep_outputs_and_determinism(tmp_path, outdir, capsys):
    path = write_config(tmp_path, SMALL)
    assert cli.main(["sweep", "--config", path]) == 0
    files = {name: (outdir / name).read_bytes() for name in ("trials.csv", "bounds.csv", "summary.csv", "trials.jsonl")}
    trials = files["trials.csv"].decode().splitlines()
    bounds = files["bounds.csv"].decode().splitlines()
    assert len(trials) == 1 + 2 * 2
    assert len(bounds) == 1 + 2 * 2
    assert len(files["trials.jsonl"].decode().splitlines()) == 4
    summary = files["summary.csv"].decode().splitlines()
    assert len(summary) == 1 + 2 + 1 and summary[-1].startswith("slope,")
    assert [r.split(",")[:2] for r in trials[1:]] == [["0", "64"], ["1", "64"], ["0", "128"], ["1", "128"]]
    assert cli.main(["sweep", "--config", path, "--jobs", "2"]) == 0
    for name, content in files.items():
        assert (outdir / name).read_bytes() == content, name


@pytest.mark.parametrize("name,header", [("trials.csv", "trials_header.csv"), ("bounds.csv", "bounds_header.csv"), ("summary.csv", "summary_header.csv")])
def test_csv_headers_match_golden(tmp_path, outdir, name, header):
    doc = dict(SMALL, run={"seeds": [0], "sweep": [32]})
    assert cli.main(["sweep", "--config", write_config(tmp_path, doc)]) == 0
    first = (outdir / name).read_text().splitlines()[0]
    assert first + "\n" == (GOLDEN / header).read_text()


def test_sweep_concentration_slope_with_declared_cap(tmp_path, outdir):
    doc = {
        "model": {"epochs": 50, "n_weight_samples": 2},
        "bound": {"c_a": 48.0},
        "run": {"seeds": [0], "sweep": [64, 256, 1024]},
    }
    assert cli.main(["sweep", "--config", write_config(tmp_path, doc)]) == 0
    lines = (outdir / "summary.csv").read_text().splitlines()
    cols = lines[0].split(",")
    slope = float(lines[-1].split(",")[cols.index("concentration_term_mean")])
    assert -0.55 <= slope <= -0.40


def test_loglog_slope_helper():
    ns = np.array([64, 128, 256, 512])
    assert cli.loglog_slope(ns, 3.0 / np.sqrt(ns)) == pytest.approx(-0.5, abs=1e-12)
    assert math.isnan(cli.loglog_slope(ns, [1.0, 0.0, 1.0, 1.0]))
    assert math.isnan(cli.loglog_slope([64], [1.0]))


# ---------------------------------------------------------------- bound-report and trial


def test_bound_report_iid_zero_dependence(tmp_path, outdir, capsys):
    doc = {"chain": {"kind": "iid"}, "model": {"epochs": 20, "n_weight_samples": 4}}
    assert cli.main(["bound-report", "--config", write_config(tmp_path, doc), "--n", "64"]) == 0
    rep = json.loads(capsys.readouterr().out)
    terms = rep["bound"]["terms"]
    assert set(terms) == set(be.TERM_FIELDS)
    assert terms["term1_discrepancy"] == 0.0
    assert terms["term2_dependence"] == 0.0
    assert rep["bound"]["inputs"]["attach_tv"] == pytest.approx(1 / 8, abs=1e-12)
    assert terms["term3_attachment_tv"] == pytest.approx(rep["bound"]["inputs"]["M"] / 8, rel=1e-12)
    assert set(rep["bound"]["renyi_term_inputs"]) == {"D_alpha", "delta", "n"}
    assert set(rep["corollary"]["terms"]) == set(be.TERM_FIELDS)
    assert "Monte-Carlo" in rep["provenance"]["posterior_gap"]
    assert rep["realized"]["posterior_samples"] == 4
    norms = rep["bound"]["inputs"]["gamma_norms"]
    assert norms["op"] <= norms["inf"] + 1e-12
    assert rep["bound"]["inputs"]["gamma_norm"] == norms["inf"]
    assert (outdir / "bound_report_n64_seed0.json").exists()


def test_bound_report_two_layer(tmp_path, outdir, capsys):
    doc = {"model": {"arity": "two_layer", "epochs": 10, "n_weight_samples": 2}}
    assert cli.main(["bound-report", "--config", write_config(tmp_path, doc), "--n", "32"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["bound"]["theorem"] == "two_layer"
    assert rep["bound"]["terms"]["frobenius_term"] > 0
    assert rep["corollary"] is None


def test_bound_report_rejects_small_n(tmp_path, outdir):
    assert cli.main(["bound-report", "--config", write_config(tmp_path, SMALL), "--n", "1"]) == 2


def test_trial_command(tmp_path, outdir, capsys):
    path = write_config(tmp_path, SMALL)
    assert cli.main(["trial", "--config", path, "--seed", "3"]) == 0
    first = capsys.readouterr().out
    assert cli.main(["trial", "--config", path, "--seed", "3"]) == 0
    assert capsys.readouterr().out == first
    doc = json.loads(first)
    assert doc["seed"] == 3 and doc["n"] == 32


def test_declared_cap_too_small_exit_two(tmp_path, outdir, capsys):
    doc = dict(SMALL, bound={"c_a": 0.5})
    assert cli.main(["trial", "--config", write_config(tmp_path, doc), "--seed", "0"]) == 2
    assert "bound.c_a" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gcnpac", "verify", "--only", "harness_cli"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"] is True
