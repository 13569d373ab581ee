"""Exception hierarchy and CLI exit codes."""

from typing import Optional

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_BUDGET = 3
EXIT_INVARIANT = 4


class FpbenchError(Exception):
    """Base class for all fpbench errors."""

    exit_code = 1


class InvalidInputError(FpbenchError, ValueError):
    """Bad symbols, mismatched lengths, unrealizable types and the like."""

    exit_code = EXIT_INVALID_CONFIG


class InvalidConfigError(InvalidInputError):
    """A configuration document failed validation."""


class ResourceLimitError(FpbenchError):
    """An enumeration or campaign would exceed a configured cap."""

    exit_code = EXIT_BUDGET

    def __init__(self, message: str, count: Optional[float] = None, cap: Optional[float] = None):
        super().__init__(message)
        self.count = count
        self.cap = cap


class InvariantViolation(FpbenchError, AssertionError):
    """A runtime invariant did not hold."""

    exit_code = EXIT_INVARIANT


def require(condition: bool, message: str) -> None:
    """Raise InvariantViolation with message unless condition holds."""
    if not condition:
        raise InvariantViolation(message)
