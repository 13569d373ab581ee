import pytest

from fpbench.keys import KeyMaterial


@pytest.fixture(autouse=True)
def _isolated_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FPBENCH_LOG_DIR", str(tmp_path / "logs"))
    for name in ("FPBENCH_THREADS", "FPBENCH_BUDGET", "FPBENCH_ENUM_CAP", "FPBENCH_ALPHABET_CAP"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def key():
    return KeyMaterial.from_int(7)


def binary_scheme(N, R=0.25, a=0.0, D1=0.3, eps=0.1, p_S=(0.5, 0.5), private=False, K_nom=2):
    """Binary public (or private) scheme built from the mix design preset."""
    from fpbench.attack_model import SourceSpec
    from fpbench.config import SchemeModel

    source = SourceSpec.private(list(p_S)) if private else SourceSpec.public(list(p_S))
    model = SchemeModel(R=R, D1=D1, eps=eps, K_nom=K_nom, design={"preset": "mix", "a": a})
    return model.build(source, N)


@pytest.fixture
def scheme():
    return binary_scheme


def campaign_document(**overrides):
    """Small public binary campaign: two blocklengths, two colluders, interleaving."""
    doc = {
        "schema": 1,
        "source": {"kind": "public", "p_S": [0.5, 0.5]},
        "scheme": {"R": 0.5, "D1": 0.3, "eps": 0.1, "design": {"preset": "mix", "a": 0.5}},
        "class": {"K": 2, "D2": 0.5},
        "attacks": [{"name": "interleaving"}],
        "decoder": {"kind": "threshold"},
        "n_grid": [4, 6],
        "trials": 4,
        "seed": 1,
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def campaign_doc():
    return campaign_document
