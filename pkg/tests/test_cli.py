import json

import numpy as np
import pytest

from jkoflow import io
from jkoflow.cli import main
from jkoflow.stationary import stationary_log_linear


def write_cfg(path, **kw):
    cfg = {"entropy": "loglog", "l": 1.0, "n": 32, "tau": 0.05, "horizon": 0.2,
           "potential": "linear", "potential_slope": 2.0, "initial": "exp_normalized"}
    cfg.update(kw)
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def test_run_writes_artifacts_deterministically(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("frames.csv", "ledger.json", "diagnostics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    fp, frames = io.read_frames_csv(tmp_path / "a" / "frames.csv")
    assert sorted(frames) == pytest.approx([0.0, 0.05, 0.1, 0.15, 0.2])
    ledger = json.loads((tmp_path / "a" / "ledger.json").read_text())
    assert len(ledger) == 5 and all(e["config_sha256"] == fp for e in ledger)
    diag = json.loads((tmp_path / "a" / "diagnostics.json").read_text())
    assert diag["config_sha256"] == fp
    status = {r["check_name"]: r["status"] for r in diag["reports"]}
    assert status["mass_conservation"] == "pass"
    assert status["energy_dissipation_step"] == "pass"


def test_trivial_run_passes_everything(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", potential="zero", initial="uniform")
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 0
    ledger = json.loads((tmp_path / "o" / "ledger.json").read_text())
    assert all(e["w2_step"] == 0 for e in ledger)
    diag = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert all(r["status"] != "fail" for r in diag["reports"])


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", tau=0.3)
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "horizon" in capsys.readouterr().err


def test_stationary_command(tmp_path, capsys):
    assert main(["stationary", "--l", "1", "--n", "64", "--out", str(tmp_path)]) == 0
    assert "regime=ThreePhase" in capsys.readouterr().out
    meta = json.loads((tmp_path / "stationary.json").read_text())
    assert meta["A"] == pytest.approx(stationary_log_linear(1.0).A)
    assert main(["stationary", "--l", str(np.log(2)), "--out", str(tmp_path)]) == 0
    assert "regime=Pure" in capsys.readouterr().out


def test_contraction_identical_initials(tmp_path):
    a = write_cfg(tmp_path / "a.json")
    b = write_cfg(tmp_path / "b.json")
    assert main(["contraction", a, b, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "contraction.json").read_text())
    assert rep["report"]["worst_value"] == 0.0


def test_contraction_uniform_vs_exponential(tmp_path):
    a = write_cfg(tmp_path / "a.json", n=64, horizon=0.5, tau=0.05)
    b = write_cfg(tmp_path / "b.json", n=64, horizon=0.5, tau=0.05, initial="uniform")
    assert main(["contraction", a, b, "--out", str(tmp_path / "o")]) == 0


def test_contraction_rejects_mismatched_configs(tmp_path):
    a = write_cfg(tmp_path / "a.json")
    b = write_cfg(tmp_path / "b.json", n=64)
    assert main(["contraction", a, b, "--out", str(tmp_path / "o")]) == 2


def test_compare_trivial_case(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", potential="zero", initial="uniform")
    assert main(["compare", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "compare.json").read_text())
    assert max(r["jko_fd"] for r in doc["distances"]) <= 1e-10


def test_validate_entropy_command(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", entropy="powpow", entropy_m=3, entropy_r=2)
    assert main(["validate-entropy", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "entropy_validation.json").read_text())
    assert doc["passed"]


def test_step_command_with_oracle(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", n=128)
    assert main(["step", cfg, "--oracle", "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "step.json").read_text())
    assert doc["oracle"]["l1"] <= 1e-2
    assert doc["phases"]["plateau"] > 0


def test_sweep_runs_each_config(tmp_path):
    a = write_cfg(tmp_path / "a.json")
    b = write_cfg(tmp_path / "b.json", entropy="powpow_equal", entropy_m=2)
    assert main(["sweep", a, b, "--out", str(tmp_path / "s"), "--workers", "2"]) == 0
    assert (tmp_path / "s" / "a" / "frames.csv").exists()
    assert (tmp_path / "s" / "b" / "ledger.json").exists()
