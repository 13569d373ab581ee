import numpy as np
import pytest

from fpbench.config import ExperimentConfig, OracleConfig, parse_config
from fpbench.errors import ResourceLimitError
from fpbench.harness import (
    EVENTS,
    brute_force_oracle,
    estimate_cost,
    estimate_reference,
    event_flags,
    fit_exponent,
    run_campaign,
    wilson_interval,
)
from fpbench.keys import KeyMaterial


def campaign(doc):
    return parse_config(doc, ExperimentConfig)


def test_wilson_interval():
    assert wilson_interval(0, 100) == (0.0, pytest.approx(0.03))
    lo, hi = wilson_interval(5, 10)
    assert lo < 0.5 < hi
    assert wilson_interval(10, 10)[1] == pytest.approx(1.0)
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_fit_exponent_recovers_slope():
    Ns = [4, 8, 12]
    rates = [2.0 ** (-n / 2) for n in Ns]
    intervals = [(0.9 * r, 1.1 * r) for r in rates]
    slope, se, points = fit_exponent(Ns, rates, intervals)
    assert slope == pytest.approx(0.5)
    assert points == 3
    assert se >= 0


def test_fit_exponent_skips_zero_rates():
    slope, se, points = fit_exponent([4, 8], [0.1, 0.0], [(0.05, 0.2), (0.0, 0.3)])
    assert slope is None and se is None
    assert points == 1


def test_event_flags():
    assert event_flags({1, 5}, {1, 2}) == (True, False, True)
    assert event_flags({1, 2}, {1, 2}) == (False, False, False)
    assert event_flags(set(), {1, 2}) == (False, True, True)
    assert event_flags({3}, ()) == (True, False, False)


def test_campaign_counts_are_consistent(campaign_doc):
    result = run_campaign(campaign(campaign_doc()), workers=1)
    assert [(r.attack, r.N) for r in result.rows] == [("interleaving", 4), ("interleaving", 6)]
    for row in result.rows:
        assert row.trials == 4
        assert row.counts["miss_one"] <= row.counts["miss_all"]
        for event in EVENTS:
            lo, hi = row.interval(event)
            assert lo <= row.rate(event) <= hi
    assert not result.partial
    assert {(s.attack, s.event) for s in result.slopes} == {("interleaving", e) for e in EVENTS}


def test_campaign_is_reproducible(campaign_doc):
    first = run_campaign(campaign(campaign_doc()), workers=1)
    again = run_campaign(campaign(campaign_doc()), workers=1)
    assert [r.counts for r in first.rows] == [r.counts for r in again.rows]
    other_seed = run_campaign(campaign(campaign_doc(seed=2)), workers=1)
    assert other_seed.config_hash != first.config_hash


def test_worker_count_does_not_change_results(campaign_doc):
    serial = run_campaign(campaign(campaign_doc()), workers=1)
    parallel = run_campaign(campaign(campaign_doc(workers=2)), workers=2)
    assert [r.counts for r in serial.rows] == [r.counts for r in parallel.rows]
    assert serial.config_hash == parallel.config_hash


def test_budget_refuses_first_blocklength(campaign_doc, monkeypatch):
    monkeypatch.setenv("FPBENCH_BUDGET", "1")
    with pytest.raises(ResourceLimitError):
        run_campaign(campaign(campaign_doc()), workers=1)


def test_budget_overrun_returns_partial_rows(campaign_doc, monkeypatch):
    cfg = campaign(campaign_doc())
    first = estimate_cost(cfg, cfg.build_scheme(4), 1)
    monkeypatch.setenv("FPBENCH_BUDGET", str(int(first) + 1))
    result = run_campaign(cfg, workers=1)
    assert result.partial
    assert [r.N for r in result.rows] == [4]
    assert any("partial" in flag for flag in result.flags)


def test_noise_trials_have_no_misses(campaign_doc):
    result = run_campaign(campaign(campaign_doc(coalition_size=0)), workers=1)
    assert {r.attack for r in result.rows} == {"noise"}
    for row in result.rows:
        assert row.counts["miss_one"] == 0
        assert row.counts["miss_all"] == 0


def test_trial_log_records(campaign_doc):
    result = run_campaign(campaign(campaign_doc(trial_log=True, n_grid=[4])), workers=1)
    assert len(result.records) == 4
    for rec in result.records:
        assert len(rec.coalition) == 2
        assert event_flags(rec.accused, rec.coalition) == (rec.fp, rec.miss_one, rec.miss_all)


def test_design_reference_report(campaign_doc):
    doc = campaign_doc(n_grid=[4], reference_draws=40, **{"class": {"K": 2, "D2": 0.5, "reference": "design"}})
    result = run_campaign(campaign(doc), workers=1)
    ref = result.reference
    assert ref is not None
    assert np.asarray(ref["empirical"]).sum() == pytest.approx(1.0)
    assert np.asarray(ref["analytic"]).sum() == pytest.approx(1.0)


def test_estimate_reference_is_a_pmf(scheme):
    params = scheme(8, R=0.25, a=0.5)
    p = estimate_reference(params, 2, KeyMaterial.from_int(3), draws=64)
    assert p.shape == (2, 2)
    assert p.sum() == pytest.approx(1.0)


def oracle_config(campaign_doc, **overrides):
    doc = campaign_doc(n_grid=[3], cells=2, mc_trials=60)
    doc.update(overrides)
    return parse_config(doc, OracleConfig)


def test_oracle_exact_probabilities(campaign_doc):
    result = brute_force_oracle(oracle_config(campaign_doc), workers=1)
    assert len(result.cells) == 2
    for cell in result.cells:
        for event in EVENTS:
            assert 0.0 <= cell.exact[event] <= 1.0 + 1e-12
            assert cell.mc[event]["lo"] <= cell.mc[event]["hi"]
        assert cell.exact["miss_one"] <= cell.exact["miss_all"] + 1e-12
        assert cell.comparison["outputs"] == 8
        assert cell.comparison["fp_threshold"] == pytest.approx(cell.exact["fp"])
    assert 0.0 <= result.coverage <= 1.0
    assert result.passed == (result.coverage >= 0.93)


def test_oracle_is_deterministic(campaign_doc):
    cfg = oracle_config(campaign_doc, compare_decoders=False, cells=1)
    first = brute_force_oracle(cfg)
    again = brute_force_oracle(cfg)
    assert first.to_json_dict() == again.to_json_dict()
    assert first.cells[0].comparison is None


def test_larger_delta_trades_false_positives_for_misses(campaign_doc):
    def scheme(delta):
        return {"R": 0.5, "D1": 0.3, "eps": 0.1, "delta": delta, "design": {"preset": "mix", "a": 0.5}}

    low = run_campaign(campaign(campaign_doc(scheme=scheme(0.1), trials=6)), workers=1)
    high = run_campaign(campaign(campaign_doc(scheme=scheme(0.2), trials=6)), workers=1)
    for a, b in zip(low.rows, high.rows):
        assert b.counts["fp"] <= a.counts["fp"]
        assert b.counts["miss_all"] >= a.counts["miss_all"]


def test_joint_decoder_campaign_records_significance(campaign_doc):
    doc = campaign_doc(decoder={"kind": "m2pmi", "k_max": 2, "pool_size": 4}, trials=16, trial_log=True)
    result = run_campaign(campaign(doc), workers=1)
    assert len(result.records) == 32
    for rec in result.records:
        assert rec.significance is True
        assert rec.accusation["decoder"] == "m2pmi"
