import json
from pathlib import Path

import numpy as np
import pytest

from fpbench.config import (
    ExperimentConfig,
    ExponentBatch,
    LemmaConfig,
    OracleConfig,
    RateConfig,
    config_document,
    load_config,
    parse_config,
)
from fpbench.errors import InvalidConfigError, InvalidInputError


def test_campaign_document_parses(campaign_doc):
    cfg = parse_config(campaign_doc(), ExperimentConfig)
    assert cfg.K == 2
    assert cfg.collusion_class.D2 == 0.5
    params = cfg.build_scheme(4)
    assert params.N == 4
    assert params.design_distortion() == pytest.approx(0.25)
    cls = cfg.build_class(params)
    assert cls.channel_shape == (2, 2, 2)


def test_schema_required(campaign_doc):
    doc = campaign_doc()
    del doc["schema"]
    with pytest.raises(InvalidConfigError):
        parse_config(doc, ExperimentConfig)
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(schema=2), ExperimentConfig)


def test_unknown_fields_rejected(campaign_doc):
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(colour="blue"), ExperimentConfig)


def test_grid_must_increase(campaign_doc):
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(n_grid=[6, 4]), ExperimentConfig)
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(n_grid=[0]), ExperimentConfig)


def test_unknown_attack_and_estimator(campaign_doc):
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(attacks=[{"name": "averaging"}]), ExperimentConfig)
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(**{"class": {"K": 2, "D2": 0.5, "estimator": "median"}}), ExperimentConfig)
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(attacks=[{"name": "table"}]), ExperimentConfig)


def test_hex_seed(campaign_doc):
    cfg = parse_config(campaign_doc(seed="ab" * 32), ExperimentConfig)
    assert cfg.master_key().hex() == "ab" * 32
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(seed="nothex"), ExperimentConfig)


def test_attack_build_modes(campaign_doc):
    cfg = parse_config(
        campaign_doc(attacks=[{"name": "majority", "alpha": 0.1}, {"name": "interleaving", "mode": "exchangeable"}]),
        ExperimentConfig,
    )
    majority = cfg.attacks[0].build(2, 2, 2)
    assert majority.mode == "memoryless"
    exch = cfg.attacks[1].build(2, 2, 2)
    assert exch.mode == "exchangeable"
    assert cfg.attacks[1].label == "interleaving:exchangeable"


def test_design_reference(campaign_doc):
    cfg = parse_config(campaign_doc(**{"class": {"K": 2, "D2": 0.5, "reference": "design"}}), ExperimentConfig)
    cls = cfg.build_class(cfg.build_scheme(4))
    assert cls.reference.sum() == pytest.approx(1.0)
    assert not np.allclose(cls.reference, 0.25)


def test_config_document_uses_aliases(campaign_doc):
    cfg = parse_config(campaign_doc(), ExperimentConfig)
    doc = config_document(cfg)
    assert doc["schema"] == 1
    assert "class" in doc
    assert parse_config(doc, ExperimentConfig) == cfg


def test_oracle_output_cap(campaign_doc):
    with pytest.raises(InvalidConfigError):
        parse_config(campaign_doc(n_grid=[20]), OracleConfig)
    assert parse_config(campaign_doc(n_grid=[4]), OracleConfig).cells == 30


def test_exponent_batch_needs_rates_for_curves():
    with pytest.raises(InvalidConfigError):
        parse_config({"schema": 1, "tasks": [{"operation": "curve", "problem": {}}]}, ExponentBatch)


def test_lemma_config_bounds():
    assert parse_config({"schema": 1}, LemmaConfig).N == 6
    with pytest.raises(InvalidConfigError):
        parse_config({"schema": 1, "N": 50}, LemmaConfig)
    with pytest.raises(InvalidConfigError):
        parse_config({"schema": 1, "p_S": [1.0, 0.0]}, LemmaConfig)


def test_rate_config_rejects_design_reference():
    cfg = parse_config(
        {"schema": 1, "source": {"p_S": [0.5, 0.5]}, "D1": 0.25, "class": {"K": 1, "D2": 0.2, "reference": "design"}},
        RateConfig,
    )
    with pytest.raises(InvalidInputError):
        cfg.build_problem()


def test_load_config_errors(tmp_path):
    missing = tmp_path / "missing.json"
    with pytest.raises(InvalidConfigError):
        load_config(missing, LemmaConfig)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InvalidConfigError):
        load_config(bad, LemmaConfig)
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"schema": 1, "N": 4}))
    assert load_config(good, LemmaConfig).N == 4


CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize(
    "name, model",
    [
        ("public_binary.json", ExperimentConfig),
        ("semiprivate_joint.json", ExperimentConfig),
        ("noise.json", ExperimentConfig),
        ("oracle.json", OracleConfig),
        ("rates.json", RateConfig),
        ("lemmas.json", LemmaConfig),
        ("exponents.json", ExponentBatch),
    ],
)
def test_shipped_configs_validate(name, model):
    cfg = load_config(CONFIGS / name, model)
    assert cfg.schema_version == 1


def test_shipped_campaign_designs_meet_D1():
    for name in ("public_binary.json", "semiprivate_joint.json", "noise.json"):
        cfg = load_config(CONFIGS / name, ExperimentConfig)
        params = cfg.build_scheme(cfg.n_grid[0])
        assert params.design_distortion() <= params.D1 + 1e-12
