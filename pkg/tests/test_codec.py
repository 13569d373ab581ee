import numpy as np
import pytest

from fpbench.attack_model import SourceSpec, block_distortion, hamming_table
from fpbench.codec import (
    Codebook,
    CodewordAddress,
    SchemeParams,
    codeword,
    design_rho,
    draw_timesharing,
    encode_user,
    num_users,
    quantize_design,
)
from fpbench.errors import InvalidInputError
from fpbench.keys import KeyMaterial


def test_num_users(scheme):
    assert num_users(scheme(8, R=0.25)) == 4
    assert num_users(scheme(8, R=0.0)) == 1


def test_design_rho_of_independent_design(scheme):
    assert design_rho(scheme(8)) == pytest.approx(0.0, abs=1e-12)


def test_design_distortion_checked_against_D1():
    source = SourceSpec.public([0.5, 0.5])
    design = np.zeros((2, 1, 2, 1))
    design[0, 0, 1, 0] = 1.0
    design[1, 0, 0, 0] = 1.0
    with pytest.raises(InvalidInputError):
        SchemeParams(N=4, R=0.0, source=source, d1=hamming_table(2, 2), D1=0.5, n_x=2, n_y=2, L_u=1, L_w=1,
                     p_W=np.array([1.0]), p_XU_given_SW=design)


def test_design_shape_checked():
    source = SourceSpec.public([0.5, 0.5])
    with pytest.raises(InvalidInputError):
        SchemeParams(N=4, R=0.0, source=source, d1=hamming_table(2, 2), D1=0.5, n_x=2, n_y=2, L_u=2, L_w=1,
                     p_W=np.array([1.0]), p_XU_given_SW=np.full((2, 1, 2, 1), 0.5))


def test_quantized_design_summary(scheme):
    design = quantize_design(scheme(8))
    summary = design.design_types()
    assert summary["T_w"] == [8]
    assert summary["rho"] == pytest.approx(0.1)
    assert summary["rows"] == 2


def test_timesharing_is_keyed(scheme, key):
    design = quantize_design(scheme(8))
    w = draw_timesharing(key, design)
    assert np.bincount(w, minlength=1).tolist() == design.T_w.counts.tolist()
    assert np.array_equal(w, draw_timesharing(key, design))


def test_codebook_lambda_entries(scheme, key):
    params = scheme(8)
    design = quantize_design(params)
    cb = Codebook(key, design, np.zeros(8, dtype=np.int64), draw_timesharing(key, design))
    assert cb.lambda_count() == 9
    assert len(cb.entries()) == 9
    assert cb.num_users == 4


def test_codewords_lie_in_their_class_and_are_keyed(scheme, key):
    params = scheme(8)
    design = quantize_design(params)
    s_d = np.zeros(8, dtype=np.int64)
    w = draw_timesharing(key, design)
    cb = Codebook(key, design, s_d, w)
    entry = cb.entries()[4]
    u = cb.codeword(1, 2, entry.index)
    assert np.bincount(u, minlength=2).tolist() == entry.tables.T_U_SdW.counts.ravel().tolist()
    assert np.array_equal(u, codeword(CodewordAddress(1, 2, entry.index), key, cb))

    other = Codebook(KeyMaterial.from_int(99), design, s_d, w)
    mine = np.stack([cb.codeword(l, m, i) for i in range(9) for m in (1, 2, 3, 4) for l in (1, 2)])
    theirs = np.stack([other.codeword(l, m, i) for i in range(9) for m in (1, 2, 3, 4) for l in (1, 2)])
    assert not np.array_equal(mine, theirs)


def test_codeword_address_bounds(scheme, key):
    params = scheme(8)
    design = quantize_design(params)
    cb = Codebook(key, design, np.zeros(8, dtype=np.int64), draw_timesharing(key, design))
    with pytest.raises(InvalidInputError):
        cb.codeword(1, 5, 0)
    with pytest.raises(InvalidInputError):
        cb.codeword(0, 1, 0)


def test_encode_user_respects_distortion(scheme, key):
    params = scheme(8, a=0.5, D1=0.3)
    design = quantize_design(params)
    rng = np.random.default_rng(11)
    for trial in range(5):
        s = rng.integers(0, 2, 8)
        w = draw_timesharing(key, design)
        cb = Codebook(key, design, params.source.degrade(s), w)
        for m in range(1, 5):
            x, record = encode_user(s, w, m, key, params, rng=rng, codebook=cb)
            assert x.shape == (8,)
            assert record.distortion == pytest.approx(block_distortion(s, x, params.d1))
            if cb.entry_for(_lam(s, w, params)).tables.respects_D1:
                assert record.distortion <= params.D1 + 1e-9
            assert record.encoding_failure == (record.row is None)
            if record.row is None:
                assert record.to_json_dict()["l"] == "FAIL"


def test_encode_user_picks_a_matching_row(scheme, key):
    params = scheme(8, a=0.0, D1=0.0)
    design = quantize_design(params)
    s = np.array([0, 1] * 4)
    w = draw_timesharing(key, design)
    cb = Codebook(key, design, params.source.degrade(s), w)
    x, record = encode_user(s, w, 1, key, params, rng=np.random.default_rng(0), codebook=cb)
    assert np.array_equal(x, s)
    if record.row is not None:
        assert np.array_equal(record.u, cb.codeword(record.row, 1, record.lam_index))


def test_encode_user_rejects_wrong_length(scheme, key):
    with pytest.raises(InvalidInputError):
        encode_user([0, 1], [0, 0], 1, key, scheme(8))


def _lam(s, w, params):
    from fpbench.codec import covertext_type

    return covertext_type(np.asarray(s), params.source.degrade(np.asarray(s)), np.asarray(w), params)
