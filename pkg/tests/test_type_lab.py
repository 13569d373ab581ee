from math import comb, log2

import numpy as np
import pytest

from fpbench.errors import InvalidInputError
from fpbench.type_lab import (
    Alphabet,
    Pmf,
    as_pmf,
    combine_labels,
    entropy_pmf,
    label_entropy,
    TypeTable,
    divergence,
    empirical_info,
    empirical_type,
    enumerate_conditional_types,
    exact_type_probability,
    info_from_table,
    joint_and_conditional_type,
    largest_remainder,
    log_type_class_size,
    mutual_information_pmf,
    quantize_conditional,
    sample_uniform_in_type_class,
)


def test_empirical_type_counts():
    t = empirical_type([0, 1, 1, 2], Alphabet(3))
    assert t.counts.tolist() == [1, 2, 1]
    assert t.total == 4


def test_empirical_type_rejects_out_of_alphabet():
    with pytest.raises(InvalidInputError):
        empirical_type([0, 3], Alphabet(3))


def test_empirical_type_rejects_empty():
    with pytest.raises(InvalidInputError):
        empirical_type([], Alphabet(2))


def test_alphabet_cap(monkeypatch):
    monkeypatch.setenv("FPBENCH_ALPHABET_CAP", "4")
    with pytest.raises(InvalidInputError):
        Alphabet(5)


def test_joint_type_and_conditional_pmf():
    t = joint_and_conditional_type([[0, 0, 1, 1], [0, 1, 1, 1]], [2, 2], n_cond=1)
    assert t.counts.tolist() == [[1, 1], [0, 2]]
    assert t.cond_counts.tolist() == [2, 2]
    np.testing.assert_allclose(t.conditional_pmf(), [[0.5, 0.5], [0.0, 1.0]])


def test_joint_type_length_mismatch():
    with pytest.raises(InvalidInputError):
        joint_and_conditional_type([[0, 1], [0]])


def test_log_type_class_size_matches_multinomial():
    assert log_type_class_size(TypeTable(np.array([2, 2]))) == pytest.approx(log2(6))
    cond = TypeTable(np.array([[1, 1], [2, 1]]), n_cond=1)
    assert log_type_class_size(cond) == pytest.approx(log2(2 * 3))


def test_sample_uniform_stays_in_class():
    rng = np.random.default_rng(0)
    t = TypeTable(np.array([3, 1, 2]))
    for _ in range(20):
        seq = sample_uniform_in_type_class(t, rng=rng)
        assert np.bincount(seq, minlength=3).tolist() == [3, 1, 2]


def test_sample_conditional_respects_cells():
    rng = np.random.default_rng(1)
    t = TypeTable(np.array([[1, 1], [2, 0]]), n_cond=1)
    cond = np.array([0, 1, 0, 1])
    seq = sample_uniform_in_type_class(t, conditioning=cond, rng=rng)
    assert sorted(seq[cond == 0].tolist()) == [0, 1]
    assert seq[cond == 1].tolist() == [0, 0]


def test_sample_conditional_rejects_wrong_conditioning():
    t = TypeTable(np.array([[1, 1], [2, 0]]), n_cond=1)
    with pytest.raises(InvalidInputError):
        sample_uniform_in_type_class(t, conditioning=np.array([0, 0, 0, 1]), rng=np.random.default_rng(0))


def test_sample_is_roughly_uniform_over_class():
    rng = np.random.default_rng(2)
    t = TypeTable(np.array([2, 2]))
    seen = {}
    for _ in range(3000):
        key = tuple(sample_uniform_in_type_class(t, rng=rng).tolist())
        seen[key] = seen.get(key, 0) + 1
    assert len(seen) == comb(4, 2)
    assert min(seen.values()) > 400


def test_enumerate_plain_types_covers_all_sequences():
    types = list(enumerate_conditional_types(3, 2))
    assert len(types) == 4
    assert len({t.key() for t in types}) == 4
    assert sum(2 ** log_type_class_size(t) for t in types) == pytest.approx(8.0)


def test_enumerate_conditional_types():
    cond = TypeTable(np.array([2, 1]))
    types = list(enumerate_conditional_types(3, 2, conditioning_type=cond))
    assert len(types) == 3 * 2
    for t in types:
        assert t.cond_counts.tolist() == [2, 1]
    assert sum(2 ** log_type_class_size(t) for t in types) == pytest.approx(8.0)


def test_enumerate_with_support_mask():
    cond = TypeTable(np.array([2, 1]))
    support = np.array([[True, False], [True, True]])
    types = list(enumerate_conditional_types(3, 2, conditioning_type=cond, support=support))
    assert len(types) == 2
    assert all(t.counts[0, 1] == 0 for t in types)


def test_enumerate_refuses_over_cap():
    from fpbench.errors import ResourceLimitError

    with pytest.raises(ResourceLimitError):
        list(enumerate_conditional_types(20, 4, cap=10))


def test_empirical_info_forms():
    x = [0, 1, 0, 1]
    assert empirical_info([x, x], form="mi") == pytest.approx(1.0)
    assert empirical_info([[0, 0, 1, 1], [0, 1, 0, 1]], form="mi") == pytest.approx(0.0)
    assert empirical_info([x], form="entropy") == pytest.approx(1.0)
    assert empirical_info([x, x], conditioning=[x], form="mi") == pytest.approx(0.0)


def test_empirical_info_rejects_unknown_form():
    with pytest.raises(InvalidInputError):
        empirical_info([[0, 1]], form="bogus")


def test_mutual_information_pmf_of_copy_channel():
    p = np.array([[0.5, 0.0], [0.0, 0.5]])
    assert mutual_information_pmf(p, (0,), (1,)) == pytest.approx(1.0)


def test_divergence_infinite_and_zero():
    assert divergence([0.5, 0.5], [1.0, 0.0]) == float("inf")
    assert divergence([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.0)


def test_exact_type_probability():
    t = TypeTable(np.array([1, 1]))
    assert exact_type_probability(t, [0.5, 0.5]) == pytest.approx(-1.0)
    assert exact_type_probability(t, [1.0, 0.0]) == float("-inf")


def test_largest_remainder_ties_go_low():
    assert largest_remainder(5, [1, 1]).tolist() == [3, 2]
    assert largest_remainder(0, [1, 2]).tolist() == [0, 0]
    assert largest_remainder(7, [0.2, 0.3, 0.5]).sum() == 7


def test_quantize_conditional_rows_sum_to_cell_counts():
    t = quantize_conditional([3, 4], np.array([[0.5, 0.5], [0.25, 0.75]]))
    assert t.flat().sum(axis=1).tolist() == [3, 4]
    assert t.counts[1].tolist() == [1, 3]


def test_info_from_table_matches_empirical_info():
    x = [0, 0, 1, 1]
    t = joint_and_conditional_type([x, x], [2, 2])
    assert info_from_table(t, [[0], [1]]) == pytest.approx(1.0)
    y = [0, 1, 0, 1]
    t = joint_and_conditional_type([x, y], [2, 2])
    assert info_from_table(t, [[0], [1]]) == pytest.approx(empirical_info([x, y]), abs=1e-12)


def test_as_pmf_validates():
    p = as_pmf([[0.5, 0.5], [1.0, 0.0]], n_cond=1)
    assert as_pmf(p) is p
    with pytest.raises(InvalidInputError):
        as_pmf([0.5, 0.6])


def test_pmf_checks_conditional_slices():
    p = Pmf(np.array([[0.5, 0.5], [1.0, -1e-12]]), n_cond=1)
    assert p.shape == (2, 2)
    assert p.probabilities.min() == 0.0
    with pytest.raises(InvalidInputError):
        Pmf(np.array([[0.5, 0.5], [0.5, 0.4]]), n_cond=1)
    with pytest.raises(InvalidInputError):
        Pmf(np.array([0.5, np.nan]))
    with pytest.raises(InvalidInputError):
        Pmf(np.array([1.5, -0.5]))


def test_entropy_pmf_marginals():
    p = np.array([[0.5, 0.0], [0.25, 0.25]])
    assert entropy_pmf(p, (0,)) == pytest.approx(1.0)
    assert entropy_pmf(p, (1,)) == pytest.approx(-0.75 * log2(0.75) - 0.25 * log2(0.25))
    assert entropy_pmf(p, (1, 0)) == pytest.approx(1.5)
    assert entropy_pmf(p, ()) == 0.0


def test_combine_labels_separates_tuples():
    labels = combine_labels([[0, 1, 0, 1, 0], [2, 0, 2, 1, 1]])
    assert labels[0] == labels[2]
    assert len(set(labels.tolist())) == 4
    with pytest.raises(InvalidInputError):
        combine_labels([])
    with pytest.raises(InvalidInputError):
        combine_labels([[0, 1], [0]])


def test_label_entropy():
    assert label_entropy(np.array([0, 0, 1, 1])) == pytest.approx(1.0)
    assert label_entropy(np.array([3, 3, 3])) == 0.0
    assert label_entropy(np.array([], dtype=np.int64)) == 0.0
    assert label_entropy(np.array([0, 10**9, 10**9, 7])) == pytest.approx(1.5)
