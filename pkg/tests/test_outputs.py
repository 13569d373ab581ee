import csv
import json
import math

import pytest

from fpbench.config import ExperimentConfig, parse_config
from fpbench.harness import TrialRecord, run_campaign
from fpbench.outputs import (
    RATES_COLUMNS,
    _plain,
    accusations_to_jsonl,
    emit_outputs,
    encode_records_to_jsonl,
    plot_rows,
    slug,
    write_json,
)


@pytest.fixture
def result(campaign_doc):
    return run_campaign(parse_config(campaign_doc(trial_log=True), ExperimentConfig), workers=1)


def test_emit_outputs_files(result, tmp_path):
    written = emit_outputs(result, tmp_path / "out")
    names = sorted(p.name for p in written)
    assert names == [
        "accusations.jsonl",
        "encodes.jsonl",
        "plot_interleaving.csv",
        "rates.csv",
        "result.json",
        "trials.jsonl",
    ]


def test_rates_csv_layout(result, tmp_path):
    emit_outputs(result, tmp_path)
    with open(tmp_path / "rates.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == RATES_COLUMNS
    assert len(rows) == 1 + 3 * len(result.rows)
    assert {r[3] for r in rows[1:]} == {"fp", "miss_one", "miss_all"}


def test_result_json_is_byte_identical_on_rerun(campaign_doc, tmp_path):
    cfg = parse_config(campaign_doc(), ExperimentConfig)
    emit_outputs(run_campaign(cfg, workers=1), tmp_path / "a")
    emit_outputs(run_campaign(cfg, workers=1), tmp_path / "b")
    for name in ("result.json", "rates.csv", "plot_interleaving.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    doc = json.loads((tmp_path / "a" / "result.json").read_text())
    assert "workers" not in doc["config"]
    assert doc["config"]["schema"] == 1


def test_trial_log_lines(result, tmp_path):
    emit_outputs(result, tmp_path)
    lines = (tmp_path / "trials.jsonl").read_text().splitlines()
    assert len(lines) == len(result.records)
    assert {"trial_id", "coalition", "accused", "fp", "decoder", "top_score", "lambda_index"} <= set(json.loads(lines[0]))


def test_accusation_and_encode_logs(result, tmp_path):
    emit_outputs(result, tmp_path)
    accusations = [json.loads(line) for line in (tmp_path / "accusations.jsonl").read_text().splitlines()]
    assert len(accusations) == len(result.records)
    for doc, record in zip(accusations, result.records):
        assert doc["trial_id"] == record.trial_id
        assert doc["N"] == record.N
        assert doc["decoder"] == "threshold"
        assert doc["accused"] == list(record.accused)
        assert {"top_score", "lambda_index", "elapsed"} <= set(doc)
    encodes = [json.loads(line) for line in (tmp_path / "encodes.jsonl").read_text().splitlines()]
    assert len(encodes) == sum(len(r.coalition) for r in result.records)
    assert {e["m"] for e in encodes} <= {m for r in result.records for m in r.coalition}


def test_plot_rows_blank_exponent_at_zero_rate(result):
    for N, event, rate, lo, hi, exponent in plot_rows(result, "interleaving"):
        if rate == 0:
            assert exponent == ""
        else:
            assert exponent == pytest.approx(-math.log2(rate) / N)


def test_plain_and_slug(tmp_path):
    assert _plain({"a": float("inf"), "b": float("nan"), "c": {2, 1}}) == {"a": "inf", "b": "nan", "c": [1, 2]}
    assert slug("interleaving:exchangeable") == "interleaving_exchangeable"
    path = write_json({"b": 1, "a": 2}, tmp_path / "x.json")
    assert path.read_text() == '{\n  "a": 2,\n  "b": 1\n}\n'


def test_jsonl_records(tmp_path):
    record = TrialRecord(
        trial_id=7, N=4, attack="interleaving", coalition=(1, 2), encoding_failures=1, accused=(2, 4),
        fp=True, miss_one=False, miss_all=True,
        accusation={"trial_id": 7, "decoder": "threshold", "accused": [2, 4], "top_score": 1.5, "lambda_index": 0},
        encodes=[{"m": 1, "lambda_index": 0, "l": 3}, {"m": 2, "lambda_index": 0, "l": "FAIL"}],
    )
    lines = encode_records_to_jsonl([record], tmp_path / "enc.jsonl").read_text().splitlines()
    assert [json.loads(line)["l"] for line in lines] == [3, "FAIL"]
    assert all(json.loads(line)["trial_id"] == 7 for line in lines)

    doc = json.loads(accusations_to_jsonl([record], tmp_path / "acc.jsonl").read_text().strip())
    assert doc["trial_id"] == 7
    assert doc["accused"] == [2, 4]
    assert doc["decoder"] == "threshold"
    assert doc["attack"] == "interleaving"
