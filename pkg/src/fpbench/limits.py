"""Resource caps, environment settings and input validation."""

import os
from typing import Optional

from .errors import ResourceLimitError

DEFAULT_THREADS = 1
DEFAULT_ALPHABET_CAP = 8
DEFAULT_ENUM_CAP = 1_000_000
DEFAULT_LAMBDA_CAP = 100_000
DEFAULT_SEARCH_CAP = 2_000_000
DEFAULT_BUDGET = 1_000_000_000

# Optimizer problem size: product of all alphabet cells
MAX_PROBLEM_CELLS = 100_000
# Brute-force oracle: |Y|^N
MAX_ORACLE_OUTPUTS = 2**16
# Lemma checks run on tiny instances only
MAX_LEMMA_N = 10
MAX_BLOCKLENGTH = 64


def _env_int(name: str, default: int) -> int:
    value = os.environ.get(name, "").strip()
    if not value:
        return default
    try:
        parsed = int(float(value))
    except ValueError:
        return default
    return parsed if parsed > 0 else default


def get_threads() -> int:
    """Worker cap from FPBENCH_THREADS (default 1)."""
    return _env_int("FPBENCH_THREADS", DEFAULT_THREADS)


def get_alphabet_cap() -> int:
    """Largest allowed alphabet size."""
    return _env_int("FPBENCH_ALPHABET_CAP", DEFAULT_ALPHABET_CAP)


def get_enum_cap() -> int:
    """Largest number of types an enumeration may yield."""
    return _env_int("FPBENCH_ENUM_CAP", DEFAULT_ENUM_CAP)


def get_lambda_cap() -> int:
    """Largest number of conditional covertext types a decoder may scan."""
    return _env_int("FPBENCH_LAMBDA_CAP", DEFAULT_LAMBDA_CAP)


def get_search_cap() -> int:
    """Largest number of coalition/row evaluations in one joint decode."""
    return _env_int("FPBENCH_SEARCH_CAP", DEFAULT_SEARCH_CAP)


def get_budget() -> int:
    """Largest estimated number of score evaluations in one campaign."""
    return _env_int("FPBENCH_BUDGET", DEFAULT_BUDGET)


def validate_alphabet_size(size: int) -> tuple[bool, Optional[str]]:
    """
    Validate an alphabet size.

    Args:
        size: Number of symbols

    Returns:
        Tuple of (valid, error_message)
    """
    if not isinstance(size, (int,)) or isinstance(size, bool):
        return False, "Alphabet size must be an integer"
    if size < 1:
        return False, "Alphabet size must be at least 1"
    cap = get_alphabet_cap()
    if size > cap:
        return False, f"Alphabet size {size} exceeds cap of {cap}"
    return True, None


def validate_blocklength(n: int) -> tuple[bool, Optional[str]]:
    """
    Validate a blocklength.

    Args:
        n: Blocklength N

    Returns:
        Tuple of (valid, error_message)
    """
    if n < 1:
        return False, "Blocklength must be positive"
    if n > MAX_BLOCKLENGTH:
        return False, f"Blocklength {n} exceeds maximum of {MAX_BLOCKLENGTH}"
    return True, None


def check_count(what: str, count: float, cap: float) -> None:
    """Raise ResourceLimitError when count exceeds cap."""
    if count > cap:
        raise ResourceLimitError(
            f"{what}: estimated {count:.3g} exceeds cap of {cap:.3g}", count=count, cap=cap
        )
