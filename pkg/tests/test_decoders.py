import numpy as np
import pytest

from fpbench.codec import Codebook, covertext_type, draw_timesharing, quantize_design
from fpbench.decoders import ScoreQuery, m2pmi_decode, search_strategy, threshold_decode, verify_significance
from fpbench.errors import InvalidInputError, ResourceLimitError


@pytest.fixture
def forged(scheme, key):
    """Query whose pirated copy is user 1's codeword for the actual covertext type."""
    params = scheme(16, R=0.25)
    design = quantize_design(params)
    s = np.array([0, 1] * 8)
    s_d = params.source.degrade(s)
    w = draw_timesharing(key, design)
    cb = Codebook(key, design, s_d, w)
    entry = cb.entry_for(covertext_type(s, s_d, w, params))
    y = cb.codeword(1, 1, entry.index).copy()
    return ScoreQuery(y=y, s_d=s_d, w=w, key=key, params=params, codebook=cb)


def test_threshold_accuses_the_copied_user(forged):
    acc = threshold_decode(forged)
    assert acc.kind == "threshold"
    assert 1 in acc.accused
    assert set(acc.per_user) == set(range(1, forged.num_users + 1))
    assert acc.per_user[1].score == pytest.approx(0.9)
    assert acc.per_user[1].score >= max(us.score for us in acc.per_user.values()) - 1e-9


def test_threshold_accused_set_matches_scores(forged):
    acc = threshold_decode(forged, delta=0.4)
    threshold = forged.params.R + 0.4
    assert acc.accused == frozenset(m for m, us in acc.per_user.items() if us.score > threshold)


def test_joint_decoder_single_user(forged):
    acc = m2pmi_decode(forged, k_max=1, pool_size=16)
    assert acc.accused == frozenset({1})
    assert acc.top_score == pytest.approx(0.6)
    assert acc.k_max_reached
    assert verify_significance(acc, forged).passed


def test_joint_decoder_k_max_zero_accuses_nobody(forged):
    acc = m2pmi_decode(forged, k_max=0)
    assert acc.accused == frozenset()
    assert acc.top_score == 0.0
    report = verify_significance(acc, forged)
    assert report.passed and report.vacuous


def test_candidate_pool_is_prescreened(forged):
    search = search_strategy(forged, k_max=2, pool_size=4)
    assert len(search.pool) == 4
    assert 1 in search.pool
    coalitions = list(search)
    assert len(coalitions) == 4 + 6
    assert coalitions[0] == (search.pool[0],)


def test_search_cap_refuses(forged, monkeypatch):
    monkeypatch.setenv("FPBENCH_SEARCH_CAP", "10")
    with pytest.raises(ResourceLimitError):
        m2pmi_decode(forged, k_max=2)


def test_query_validates_pirated_copy(scheme, key):
    params = scheme(8)
    with pytest.raises(InvalidInputError):
        ScoreQuery(y=np.full(8, 2), s_d=np.zeros(8), w=np.zeros(8), key=key, params=params)
    with pytest.raises(InvalidInputError):
        ScoreQuery(y=np.zeros(7), s_d=np.zeros(8), w=np.zeros(8), key=key, params=params)


def test_accusation_json(forged):
    data = threshold_decode(forged).to_json_dict(trial_id=3)
    assert data["trial_id"] == 3
    assert data["decoder"] == "threshold"
    assert 1 in data["accused"]


def noisy_copies(scheme, key, seeds):
    """Queries whose pirated copy is some user's codeword with a few flipped symbols."""
    params = scheme(16, R=0.25)
    design = quantize_design(params)
    s = np.array([0, 1] * 8)
    s_d = params.source.degrade(s)
    w = draw_timesharing(key, design)
    cb = Codebook(key, design, s_d, w)
    entry = cb.entry_for(covertext_type(s, s_d, w, params))
    for seed in seeds:
        rng = np.random.default_rng(seed)
        user = int(rng.integers(1, 17))
        y = cb.codeword(1, user, entry.index).copy()
        flips = rng.random(16) < 0.1 * (seed % 4)
        y[flips] ^= 1
        yield ScoreQuery(y=y, s_d=s_d, w=w, key=key, params=params, codebook=cb)


def test_threshold_matches_single_user_joint_decoder(scheme, key):
    for q in noisy_copies(scheme, key, range(12)):
        thr = threshold_decode(q)
        joint = m2pmi_decode(q, k_max=1, pool_size=q.num_users)
        if thr.top_score > 0:
            top = max(us.score for us in thr.per_user.values())
            leaders = {m for m, us in thr.per_user.items() if us.score >= top - 1e-9}
            assert len(joint.accused) == 1
            assert joint.accused <= leaders <= thr.accused
            assert joint.top_score == pytest.approx(thr.top_score, abs=1e-9)
        else:
            assert joint.accused == frozenset()


def test_joint_accusations_are_significant(scheme, key):
    accused = 0
    for q in noisy_copies(scheme, key, range(20)):
        acc = m2pmi_decode(q, k_max=2, pool_size=6)
        assert verify_significance(acc, q).passed
        accused += bool(acc.accused)
    assert accused > 0
