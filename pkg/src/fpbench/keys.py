"""Secret-key material and keyed pseudorandom streams.

The master seed stands in for the secret key shared by embedder and decoder.
Every codeword, time-sharing sequence and per-trial stream is regenerated from
HMAC-SHA256(master_seed, canonical_json(context)) feeding a counter-based
Philox generator, so two parties holding the same seed see identical draws.
"""

import hashlib
import hmac
import json
import secrets
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

import numpy as np

from .errors import InvalidInputError

SEED_BYTES = 32


def _default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (bytes, bytearray)):
        return bytes(obj).hex()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_json(obj: Any) -> str:
    """
    Deterministic JSON representation used for hashing.

    Sorted keys, compact separators, numpy values converted to plain Python.

    Args:
        obj: JSON-like value

    Returns:
        Canonical JSON string
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def config_hash(obj: Any) -> str:
    """SHA-256 hex digest of the canonical JSON of obj."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


@dataclass(frozen=True)
class KeyMaterial:
    """256-bit master seed."""

    master_seed: bytes

    def __post_init__(self) -> None:
        if len(self.master_seed) != SEED_BYTES:
            raise InvalidInputError(f"Master seed must be {SEED_BYTES} bytes")

    @classmethod
    def from_hex(cls, text: str) -> "KeyMaterial":
        text = text.strip()
        if len(text) != 2 * SEED_BYTES:
            raise InvalidInputError(f"Key must be {2 * SEED_BYTES} hex characters")
        try:
            return cls(bytes.fromhex(text))
        except ValueError as e:
            raise InvalidInputError(f"Key is not valid hex: {e}") from e

    @classmethod
    def from_int(cls, seed: int) -> "KeyMaterial":
        """Expand a small integer seed into a full key (test and config convenience)."""
        return cls(hashlib.sha256(f"fpbench-seed:{int(seed)}".encode()).digest())

    def hex(self) -> str:
        return self.master_seed.hex()

    def digest(self, *context: Any) -> bytes:
        """HMAC-SHA256 of the canonical context under this key."""
        return hmac.new(self.master_seed, canonical_json(list(context)).encode(), hashlib.sha256).digest()

    def derive(self, *context: Any) -> "KeyMaterial":
        """Child key bound to context."""
        return KeyMaterial(self.digest("derive", *context))


def derive_rng(key: KeyMaterial, *context: Any) -> np.random.Generator:
    """
    Keyed counter-mode generator for a context.

    Args:
        key: Master key
        *context: JSON-serializable values identifying the stream

    Returns:
        numpy Generator backed by Philox, fully determined by (key, context)
    """
    digest = key.digest(*context)
    philox = np.random.Philox(
        key=int.from_bytes(digest[:16], "little"),
        counter=int.from_bytes(digest[16:], "little"),
    )
    return np.random.Generator(philox)


def keygen() -> KeyMaterial:
    """Fresh random key from the OS entropy source."""
    return KeyMaterial(secrets.token_bytes(SEED_BYTES))


def save_key(key: KeyMaterial, path: Union[str, Path]) -> None:
    """Write the key as 64 hex characters plus newline."""
    Path(path).write_text(key.hex() + "\n", encoding="utf-8")


def load_key(path: Union[str, Path]) -> KeyMaterial:
    """Read a 64-hex-character key file."""
    return KeyMaterial.from_hex(Path(path).read_text(encoding="utf-8"))


def coerce_key(value: Union[KeyMaterial, int, str]) -> KeyMaterial:
    """Accept a KeyMaterial, an integer seed or a 64-hex string."""
    if isinstance(value, KeyMaterial):
        return value
    if isinstance(value, (int, np.integer)):
        return KeyMaterial.from_int(int(value))
    if isinstance(value, str):
        return KeyMaterial.from_hex(value)
    raise InvalidInputError(f"Cannot interpret {type(value).__name__} as key material")
