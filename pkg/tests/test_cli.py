import json
import stat

import numpy as np
import pytest

from fpbench.attack_model import make_class
from fpbench.cli import main
from fpbench.config import DesignModel
from fpbench import exponent_optimizer
from fpbench.errors import EXIT_BUDGET, EXIT_INVALID_CONFIG, EXIT_INVARIANT, EXIT_OK
from fpbench.exponent_optimizer import ExponentProblem, OracleValue
from fpbench.keys import load_key


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_keygen_prints_hex(capsys):
    assert main(["keygen"]) == EXIT_OK
    text = capsys.readouterr().out.strip()
    assert len(text) == 64
    int(text, 16)


def test_keygen_writes_private_file(tmp_path):
    path = tmp_path / "secret.key"
    assert main(["keygen", "--out", str(path)]) == EXIT_OK
    assert stat.S_IMODE(path.stat().st_mode) == 0o600
    assert len(load_key(path).hex()) == 64


def test_simulate_writes_results(campaign_doc, tmp_path, capsys):
    config = write(tmp_path / "campaign.json", campaign_doc(n_grid=[4]))
    out = tmp_path / "results"
    assert main(["simulate", config, "--out", str(out), "--workers", "1"]) == EXIT_OK
    assert (out / "rates.csv").exists()
    assert (out / "result.json").exists()
    assert "N=4" in capsys.readouterr().out


def test_simulate_writes_accusation_log(campaign_doc, tmp_path):
    config = write(tmp_path / "campaign.json", campaign_doc(n_grid=[4], trial_log=True))
    out = tmp_path / "results"
    assert main(["simulate", config, "--out", str(out), "--workers", "1"]) == EXIT_OK
    lines = (out / "accusations.jsonl").read_text().splitlines()
    assert len(lines) == 4
    doc = json.loads(lines[0])
    assert {"trial_id", "decoder", "accused", "top_score", "lambda_index", "elapsed"} <= set(doc)
    assert (out / "encodes.jsonl").exists()


def test_bad_schema_exits_with_config_code(campaign_doc, tmp_path, capsys):
    config = write(tmp_path / "campaign.json", campaign_doc(schema=7))
    assert main(["simulate", config]) == EXIT_INVALID_CONFIG
    assert "schema" in capsys.readouterr().err


def test_budget_exit_code(campaign_doc, tmp_path, monkeypatch):
    monkeypatch.setenv("FPBENCH_BUDGET", "1")
    config = write(tmp_path / "campaign.json", campaign_doc())
    assert main(["simulate", config, "--out", str(tmp_path / "r"), "--workers", "1"]) == EXIT_BUDGET


def test_exponent_batch(tmp_path):
    p_W, design = DesignModel(preset="mix", a=1.0).build(2, 2, 2)
    problem = ExponentProblem(
        variant="threshold",
        p_S=np.array([0.5, 0.5]),
        h=np.array([0, 0]),
        p_W=p_W,
        p_XU_given_SW=design,
        cls=make_class(1, 2, 2, D2=0.1),
        R=0.6,
        restarts=2,
    ).to_json_dict()
    batch = write(
        tmp_path / "batch.json",
        {
            "schema": 1,
            "tasks": [
                {"operation": "solve", "problem": problem},
                {"operation": "curve", "problem": problem, "rates": [0.3, 0.6], "oracle": False},
            ],
        },
    )
    out = tmp_path / "exp"
    assert main(["exponent", batch, "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "exponents.json").read_text())
    assert len(doc["tasks"]) == 2
    assert doc["tasks"][0]["result"]["status"] == "zero-divergence"
    assert doc["tasks"][1]["result"][0]["value"] == "inf"


def test_exponent_oracle_disagreement_exits_with_invariant_code(tmp_path, monkeypatch, capsys):
    problem = ExponentProblem(
        variant="joint",
        p_S=np.array([0.5, 0.5]),
        h=np.array([0, 0]),
        p_W=np.array([1.0]),
        p_XU_given_SW=np.array([[[[0.5, 0.25], [0.0, 0.25]]], [[[0.25, 0.0], [0.25, 0.5]]]]),
        cls=make_class(1, 2, 2, D2=0.1),
        R=0.1,
        restarts=2,
    ).to_json_dict()
    monkeypatch.setattr(
        exponent_optimizer,
        "grid_oracle",
        lambda prob: OracleValue(
            value=1.0, minimizer=None, mesh=0.1, refined_mesh=0.1, lipschitz=0.0,
            tolerance=1e-3, points=1, feasible_points=1,
        ),
    )
    batch = write(tmp_path / "batch.json", {"schema": 1, "tasks": [{"operation": "solve", "problem": problem}]})
    assert main(["exponent", batch, "--out", str(tmp_path / "exp")]) == EXIT_INVARIANT
    assert "grid oracle" in capsys.readouterr().err.lower()


def test_check_lemmas(tmp_path):
    config = write(tmp_path / "lemmas.json", {"schema": 1, "N": 4, "mc_trials": 200, "prt_N": 3, "psw_max_N": 5})
    out = tmp_path / "lemma-out"
    assert main(["check-lemmas", config, "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "lemmas.json").read_text())
    assert doc["passed"] is True


def test_rates_command(tmp_path):
    config = write(
        tmp_path / "rates.json",
        {
            "schema": 1,
            "source": {"kind": "public", "p_S": [0.5, 0.5]},
            "D1": 0.25,
            "class": {"K": 1, "D2": 1.0},
            "kinds": ["thr", "joint-one"],
            "restarts": 2,
        },
    )
    out = tmp_path / "rates"
    assert main(["rates", config, "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "rates.json").read_text())
    assert doc["kinds"] == ["thr", "joint-one"]
    assert doc["results"]["thr"]["value"] == pytest.approx(0.0, abs=1e-6)


def test_missing_command_is_usage_error():
    with pytest.raises(SystemExit):
        main([])
