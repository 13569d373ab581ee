import numpy as np
import pytest

from fpbench.attack_model import SourceSpec, hamming_table, make_class
from fpbench.codec import conditional_binning_information
from fpbench.errors import InvalidInputError
from fpbench.rate_bounds import (
    RateProblem,
    check_Imin_identity,
    design_from_rate,
    private_capacity,
    rate_table,
    rate_threshold,
)


def xor_pmf():
    p = np.zeros((1, 2, 2, 2))
    for u1 in range(2):
        for u2 in range(2):
            p[0, u1, u2, u1 ^ u2] = 0.25
    return p


def erasable_problem(K=1, **kwargs):
    """D2 = 1 lets the coalition output a constant, so nothing survives."""
    return RateProblem(
        source=SourceSpec.public([0.5, 0.5]),
        d1=hamming_table(2, 2),
        D1=0.25,
        cls=make_class(K, 2, 2, D2=1.0),
        restarts=2,
        **kwargs,
    )


def test_imin_identity_on_xor():
    report = check_Imin_identity(xor_pmf(), 2)
    assert report.rhs == pytest.approx(0.5)
    assert report.lhs == pytest.approx(0.5)
    assert report.argmin == (0, 1)
    assert report.passed
    assert report.terms[(0,)] == pytest.approx(1.0)


def test_imin_identity_rejects_asymmetric_pmf():
    p = np.zeros((1, 2, 2, 2))
    for u1 in range(2):
        for u2 in range(2):
            p[0, u1, u2, u1] = 0.25
    with pytest.raises(InvalidInputError):
        check_Imin_identity(p, 2)
    with pytest.raises(InvalidInputError):
        check_Imin_identity(xor_pmf() * 2, 2)


def test_erasable_class_has_zero_rate():
    res = rate_threshold("thr", erasable_problem())
    assert res.value == pytest.approx(0.0, abs=1e-6)
    assert res.kind == "thr"
    assert res.label == "thr at L_u=2, L_w=1"


def test_threshold_and_joint_agree_for_one_colluder():
    problem = RateProblem(
        source=SourceSpec.public([0.5, 0.5]),
        d1=hamming_table(2, 2),
        D1=0.25,
        cls=make_class(1, 2, 2, D2=0.1),
        restarts=2,
    )
    thr = rate_threshold("thr", problem)
    one = rate_threshold("joint-one", problem)
    assert thr.value == pytest.approx(one.value, abs=1e-3)
    assert thr.value >= 0.0


def test_unknown_kind():
    with pytest.raises(InvalidInputError):
        rate_threshold("lower", erasable_problem())


@pytest.mark.slow
def test_private_capacity_of_noiseless_channel():
    # D2 = 0 leaves only the identity channel; D1 = 0.5 allows x independent of s
    problem = RateProblem(
        source=SourceSpec.private([0.5, 0.5]),
        d1=hamming_table(2, 2),
        D1=0.5,
        cls=make_class(1, 2, 2, D2=0.0),
        restarts=3,
    )
    res = private_capacity(problem)
    assert res.value > 0.95
    assert res.value <= 1.0 + 1e-6


def test_private_capacity_needs_private_source():
    with pytest.raises(InvalidInputError):
        private_capacity(erasable_problem())


def test_problem_validation():
    with pytest.raises(InvalidInputError):
        RateProblem(
            source=SourceSpec.public([0.5, 0.5]),
            d1=np.ones((2, 2)),
            D1=0.5,
            cls=make_class(1, 2, 2, D2=0.1),
        )
    with pytest.raises(InvalidInputError):
        RateProblem(
            source=SourceSpec.public([0.25] * 4),
            d1=hamming_table(4, 2),
            D1=0.5,
            cls=make_class(1, 2, 2, D2=0.1),
        )
    with pytest.raises(InvalidInputError):
        erasable_problem(force_u_equals_x=True, L_u=3)


def test_rate_table_levels():
    table = rate_table("thr", erasable_problem(), levels=(1, 2))
    assert table.levels == [1, 2]
    assert len(table.values) == 2
    assert table.monotone
    assert [r.L_u for r in table.results] == [1, 2]


def test_design_from_rate_is_normalized():
    res = rate_threshold("thr", erasable_problem())
    p_W, design = design_from_rate(res)
    assert p_W.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(design.sum(axis=(2, 3)), 1.0)
    assert design.shape == (2, 1, 2, 2)


@pytest.mark.slow
def test_joint_all_collapses_on_fair_class():
    problem = RateProblem(
        source=SourceSpec.public([0.5, 0.5]),
        d1=hamming_table(2, 2),
        D1=0.25,
        cls=make_class(2, 2, 2, D2=0.2, fair_only=True),
        restarts=4,
    )
    one = rate_threshold("joint-one", problem)
    every = rate_threshold("joint-all", problem, warm=[one.theta])
    assert one.value > 0.005
    assert abs(every.value - one.value) <= 1e-6
    assert every.imin is not None and every.imin.passed
    assert every.flags == []


def test_single_restart_leaves_the_zero_design():
    # the all-zero base design is stationary; one restart must still find the flip capacity
    problem = RateProblem(
        source=SourceSpec.public([0.5, 0.5]),
        d1=hamming_table(2, 2),
        D1=0.5,
        cls=make_class(1, 2, 2, D2=0.02),
        restarts=1,
    )
    res = rate_threshold("thr", problem)
    expected = 1.0 + 0.02 * np.log2(0.02) + 0.98 * np.log2(0.98)
    assert res.value == pytest.approx(expected, abs=2e-3)


@pytest.mark.slow
def test_threshold_joint_upper_ordering():
    problem = RateProblem(
        source=SourceSpec.public([0.5, 0.5]),
        d1=hamming_table(2, 2),
        D1=0.25,
        cls=make_class(2, 2, 2, D2=0.2),
        L_u=2,
        L_w=1,
        restarts=4,
    )
    thr = rate_threshold("thr", problem)
    one = rate_threshold("joint-one", problem, warm=[thr.theta])
    upper = rate_threshold("upper", problem)
    assert thr.value <= one.value + 1e-4
    assert one.value <= upper.value + 1e-4


@pytest.mark.slow
def test_private_source_joint_rate_is_capacity():
    problem = RateProblem(
        source=SourceSpec.private([0.5, 0.5]),
        d1=hamming_table(2, 2),
        D1=0.25,
        cls=make_class(1, 2, 2, D2=0.1),
        restarts=4,
        force_u_equals_x=True,
    )
    one = rate_threshold("joint-one", problem)
    p_S = problem.source.p_S
    design = one.design["p_XU_given_SW"]
    p_swu = p_S[:, None, None] * one.p_W[None, :, None] * design.sum(axis=2)
    assert conditional_binning_information(p_swu, problem.source.h) == pytest.approx(0.0, abs=1e-12)
    capacity = private_capacity(problem)
    assert one.value == pytest.approx(capacity.value, abs=1e-4)
