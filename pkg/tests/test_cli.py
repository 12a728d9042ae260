import json
import subprocess
import sys

import numpy as np
import pytest

from properpo.cli import config_hash, main
from properpo.klst import ChoiceTable, btl_table


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def test_check_proper_log_passes(capsys):
    code, out, _ = run(["check-proper", "--loss", "log", "--n", "3", "--resolution", "20"], capsys)
    assert code == 0
    assert out["result"]["verdict"] == "strictly proper"
    assert out["seed"] == 0 and len(out["config_hash"]) == 64


def test_check_proper_alpha_is_a_finding(capsys):
    code, out, _ = run(["check-proper", "--loss", "alpha", "--beta", "1", "--n", "2"], capsys)
    assert code == 1
    assert out["status"] == "fail" and out["result"]["verdict"] == "improper"
    assert set(out["result"]["worst_pair"]) == {"p", "q"}


def test_klst_verify_on_btl_fixture(tmp_path, capsys):
    path = tmp_path / "table.json"
    btl_table(np.array([[0.0, 1.0], [0.4, -0.2]])).dump(path)
    code, out, _ = run(["klst-verify", "--table", str(path)], capsys)
    assert code == 0 and out["result"]["passed"]


def test_klst_verify_reports_violation(tmp_path, capsys):
    path = tmp_path / "table.json"
    ChoiceTable(np.array([[0.5, 0.6, 0.7], [0.4, 0.5, 0.3], [0.3, 0.3, 0.5]])).dump(path)
    code, out, _ = run(["klst-verify", "--table", str(path), "--alphas", "[0.5]"], capsys)
    assert code == 1
    assert out["result"]["failures"][0]["witness"] is not None


def test_phipo_and_composite_builds(capsys):
    code, out, _ = run(["phipo-build", "--potential", "quadratic"], capsys)
    assert code == 0 and out["result"]["certificate"]["verdict"] == "strictly proper"
    code, out, _ = run(["composite-build", "--psi", "exp", "--link", "sigmoid"], capsys)
    assert code == 0 and out["result"]["accepted"]
    code, out, _ = run(["composite-build", "--psi", "exp", "--link", "gumbel"], capsys)
    assert code == 1
    assert out["result"]["F_at_worst"] == pytest.approx(1 - np.exp(-1))


def test_solve_step1_and_lennorm(capsys):
    code, out, _ = run(["solve-step1", "--rewards", "[1, 0]", "--potential", "neg_entropy"], capsys)
    assert code == 0
    assert out["result"]["pi"][0] == pytest.approx(np.e / (np.e + 1), abs=1e-9)
    code, out, _ = run(["lennorm", "--factors", "[0.5, 0.2]", "--mode", "kl_geometric"], capsys)
    assert code == 0 and out["result"]["value"] == pytest.approx(np.sqrt(0.1))


def test_train_writes_outputs_and_is_reproducible(tmp_path, capsys):
    cfg = {"spec": {"recipe": "pppo", "la": {"id": "log"}, "lb": {"id": "log"}},
           "rewards": [[1.0, 0.0, -1.0]], "steps": 30, "n_samples": 500, "seed": 3,
           "trace": str(tmp_path / "trace.csv")}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--out", str(out1)]) == 0
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert (tmp_path / "a.json.meta.json").exists()
    assert (tmp_path / "trace.csv").read_text().startswith("step,objective,grad_norm,accuracy")
    payload = json.loads(out1.read_text())
    assert payload["seed"] == 3 and payload["config_hash"] == config_hash(payload["config"])


def test_flags_override_config(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"loss": "square", "n": 3}))
    code, out, _ = run(["check-proper", "--config", str(tmp_path / "cfg.json"), "--n", "2"], capsys)
    assert code == 0 and out["config"]["n"] == 2


def test_malformed_json_reports_position(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"loss": "log",\n "n": 3,,}')
    code, _, err = run(["check-proper", "--config", str(tmp_path / "bad.json")], capsys)
    assert code == 2 and "line 2, column 9" in err


def test_schema_violation_reports_field(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"spec": {"recipe": "pppo", "la": {"id": "log"}, "lb": {"id": "nope"}},
         "rewards": [[0, 1]]}))
    code, _, err = run(["train", "--config", str(tmp_path / "cfg.json")], capsys)
    assert code == 2 and "spec/lb/id" in err


def test_usage_errors_exit_two(tmp_path, capsys):
    assert main(["check-proper", "--loss", "log"]) == 2
    assert main(["klst-verify", "--table", str(tmp_path / "missing.json")]) == 2
    assert main(["no-such-command"]) == 2
    capsys.readouterr()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "properpo", "catalog", "--id", "log"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["entries"][0]["id"] == "log"
