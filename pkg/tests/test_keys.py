import json

import numpy as np
import pytest

from fpbench.errors import InvalidInputError, InvariantViolation, ResourceLimitError, require
from fpbench.keys import (
    KeyMaterial,
    canonical_json,
    coerce_key,
    config_hash,
    derive_rng,
    keygen,
    load_key,
    save_key,
)
from fpbench.limits import check_count, get_threads, validate_blocklength
from fpbench.logging import LOG_FILENAME, log_event


def test_derive_rng_is_reproducible(key):
    a = derive_rng(key, "trial", 8, 3).integers(0, 1000, size=16)
    b = derive_rng(key, "trial", 8, 3).integers(0, 1000, size=16)
    c = derive_rng(key, "trial", 8, 4).integers(0, 1000, size=16)
    assert a.tolist() == b.tolist()
    assert a.tolist() != c.tolist()


def test_derive_depends_on_context(key):
    assert key.derive("key", 1).hex() != key.derive("key", 2).hex()
    assert key.derive("key", 1) == key.derive("key", 1)


def test_from_int_and_hex_agree():
    k = KeyMaterial.from_int(3)
    assert KeyMaterial.from_hex(k.hex()) == k
    assert coerce_key(3) == k
    assert coerce_key(k.hex()) == k


def test_bad_hex_rejected():
    with pytest.raises(InvalidInputError):
        KeyMaterial.from_hex("zz" * 32)
    with pytest.raises(InvalidInputError):
        KeyMaterial.from_hex("ab")


def test_save_and_load_key(tmp_path):
    k = keygen()
    path = tmp_path / "secret.key"
    save_key(k, path)
    assert load_key(path) == k


def test_canonical_json_is_order_independent():
    assert canonical_json({"b": 1, "a": np.int64(2)}) == '{"a":2,"b":1}'
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})


def test_threads_from_env(monkeypatch):
    assert get_threads() == 1
    monkeypatch.setenv("FPBENCH_THREADS", "4")
    assert get_threads() == 4
    monkeypatch.setenv("FPBENCH_THREADS", "lots")
    assert get_threads() == 1


def test_validate_blocklength():
    assert validate_blocklength(8) == (True, None)
    ok, err = validate_blocklength(0)
    assert not ok and "positive" in err
    ok, _ = validate_blocklength(10_000)
    assert not ok


def test_check_count_raises_with_numbers():
    check_count("fine", 5, 10)
    with pytest.raises(ResourceLimitError) as exc:
        check_count("enumeration", 11, 10)
    assert exc.value.count == 11
    assert exc.value.cap == 10
    assert exc.value.exit_code == 3


def test_require():
    require(True, "never")
    with pytest.raises(InvariantViolation):
        require(False, "broken")


def test_log_event_appends_json_line(tmp_path):
    log_event("campaign", "ok", trials=np.int64(3))
    lines = (tmp_path / "logs" / LOG_FILENAME).read_text().splitlines()
    entry = json.loads(lines[-1])
    assert entry["action"] == "campaign"
    assert entry["details"]["trials"] == 3


def test_log_event_disabled(tmp_path, monkeypatch):
    monkeypatch.setenv("FPBENCH_LOG_DIR", "")
    log_event("campaign", "ok")
    assert not (tmp_path / "logs").exists()
