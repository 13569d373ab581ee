import numpy as np
import pytest

from fpbench.attack_model import (
    CollusionChannelSpec,
    CollusionClassSpec,
    DistortionSpec,
    SourceSpec,
    adversarial_family,
    apply_collusion,
    block_distortion,
    check_feasible,
    copy_attack,
    exchangeable_from_memoryless,
    hamming_table,
    interleaving_attack,
    majority_attack,
    majority_estimator,
    make_class,
    min_estimator,
    reference_from_design,
    sample_covertext,
    symmetrize_fair,
    uniform_observed_attack,
)
from fpbench.errors import InvalidInputError


def test_source_kinds():
    pub = SourceSpec.public([0.5, 0.5])
    priv = SourceSpec.private([0.5, 0.5])
    assert pub.n_sd == 1 and not pub.is_private
    assert priv.n_sd == 2 and priv.is_private
    semi = SourceSpec.semiprivate([0.25, 0.25, 0.5], [0, 0, 1])
    assert semi.degrade(np.array([0, 1, 2])).tolist() == [0, 0, 1]


def test_source_rejects_bad_pmf():
    with pytest.raises(InvalidInputError):
        SourceSpec.public([0.5, 0.6])


def test_sample_covertext_degrades_symbolwise():
    spec = SourceSpec.semiprivate([0.25, 0.25, 0.5], [0, 0, 1])
    s, s_d = sample_covertext(spec, 50, np.random.default_rng(0))
    assert s.shape == (50,)
    assert np.array_equal(s_d, spec.h[s])


def test_hamming_and_block_distortion():
    assert hamming_table(2, 3).tolist() == [[0, 1, 1], [1, 0, 1]]
    assert block_distortion([0, 1, 1, 0], [0, 0, 1, 1], hamming_table(2, 2)) == pytest.approx(0.5)


def test_estimators():
    phi = majority_estimator(3, 2)
    assert phi[0, 1, 1] == 1
    assert phi[1, 0, 0] == 0
    assert majority_estimator(2, 2)[0, 1] == 0
    assert min_estimator(2, 3)[2, 1] == 1


def test_interleaving_feasibility_depends_on_D2():
    channel = interleaving_attack(2, 2, 2)
    loose = check_feasible(channel, make_class(2, 2, 2, D2=0.5))
    tight = check_feasible(channel, make_class(2, 2, 2, D2=0.1))
    assert loose.feasible
    assert loose.distortion == pytest.approx(0.25)
    assert not tight.feasible
    assert "exceeds D2" in tight.message


def test_copy_attack_is_unfair():
    report = check_feasible(copy_attack(2, 2, 2, colluder=1), make_class(2, 2, 2, D2=1.0, fair_only=True))
    assert not report.fair
    assert not report.feasible
    assert check_feasible(copy_attack(2, 2, 2), make_class(2, 2, 2, D2=1.0)).feasible


def test_symmetrized_copy_is_interleaving():
    fair = symmetrize_fair(copy_attack(2, 2, 2))
    np.testing.assert_allclose(fair.table, interleaving_attack(2, 2, 2).table)


def test_empty_class_rejected():
    with pytest.raises(InvalidInputError):
        make_class(2, 2, 2, D2=0.0, d2=np.ones((2, 2)))


def test_class_json_roundtrip():
    cls = make_class(2, 2, 3, D2=0.4, estimator="min")
    again = CollusionClassSpec.from_json_dict(cls.to_json_dict())
    assert again.D2 == cls.D2
    assert np.array_equal(again.phi, cls.phi)


def test_reference_from_design_is_product_mixture():
    p_x = np.array([[[0.9, 0.1]], [[0.2, 0.8]]])  # (s, w, x)
    ref = reference_from_design([0.5, 0.5], [1.0], p_x, 2)
    assert ref.sum() == pytest.approx(1.0)
    assert ref[0, 0] == pytest.approx(0.5 * 0.81 + 0.5 * 0.04)


def test_named_attack_tables():
    assert majority_attack(3, 2, 2).table[0, 1, 1].tolist() == [0.0, 1.0]
    np.testing.assert_allclose(majority_attack(2, 2, 2, alpha=0.2).table[0, 0], [0.8, 0.2])
    np.testing.assert_allclose(uniform_observed_attack(2, 3, 3).table[0, 2], [0.5, 0.0, 0.5])


def test_memoryless_interleaving_copies_a_colluder():
    rng = np.random.default_rng(3)
    x1 = rng.integers(0, 2, 200)
    x2 = rng.integers(0, 2, 200)
    y = apply_collusion([x1, x2], interleaving_attack(2, 2, 2), rng)
    assert np.all((y == x1) | (y == x2))


def test_apply_collusion_checks_inputs():
    with pytest.raises(InvalidInputError):
        apply_collusion([[0, 1]], interleaving_attack(2, 2, 2), np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        apply_collusion([[0, 2], [0, 1]], interleaving_attack(2, 2, 2), np.random.default_rng(0))


def test_exchangeable_hits_assigned_type():
    channel = exchangeable_from_memoryless(interleaving_attack(2, 2, 2), rounding="strict")
    x1 = np.array([0, 0, 1, 1, 0, 1])
    x2 = np.array([1, 1, 0, 0, 0, 1])
    y = apply_collusion([x1, x2], channel, np.random.default_rng(5))
    assert sorted(y[:2].tolist()) == [0, 1]
    assert sorted(y[2:4].tolist()) == [0, 1]
    assert y[4] == 0 and y[5] == 1


def test_exchangeable_strict_rejects_unrealizable():
    channel = exchangeable_from_memoryless(interleaving_attack(2, 2, 2), rounding="strict")
    with pytest.raises(InvalidInputError):
        apply_collusion([[0, 1, 1], [1, 0, 0]], channel, np.random.default_rng(0))


def test_channel_rejects_bad_rows():
    with pytest.raises(InvalidInputError):
        CollusionChannelSpec(K=1, n_x=2, n_y=2, table=np.array([[0.5, 0.6], [1.0, 0.0]]))


def test_adversarial_family_is_feasible():
    cls = make_class(2, 2, 2, D2=0.3)
    family = adversarial_family(cls, np.random.default_rng(0), n_random=8)
    assert family
    for channel in family:
        assert check_feasible(channel, cls).feasible
    names = [c.name for c in family]
    assert "interleaving" in names


def test_distortion_spec_hamming():
    spec = DistortionSpec.hamming(3, 2, 2, D1=0.2, D2=0.3)
    assert spec.d1.shape == (3, 2)
    assert spec.d2[2].tolist() == [1.0, 1.0]
    with pytest.raises(InvalidInputError):
        DistortionSpec(-np.ones((2, 2)), np.zeros((2, 2)), 0.1, 0.1)


def test_expected_table_of_exchangeable_channel():
    channel = interleaving_attack(2, 2, 2)
    exch = exchangeable_from_memoryless(channel)
    np.testing.assert_allclose(exch.expected_table(), channel.table)
    assert channel.expected_table() is channel.table
