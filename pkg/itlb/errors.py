from __future__ import annotations

from typing import Any


class ItlbError(Exception):
    """Base class of every error raised by itlb."""

    exit_code = 1


class ParseError(ItlbError, ValueError):
    exit_code = 2

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at column {position})")
        self.position = position


class InvariantViolation(ItlbError, ValueError):
    exit_code = 3

    def __init__(self, invariant: str, detail: str = ""):
        super().__init__(f"invariant violated: {invariant}" + (f" ({detail})" if detail else ""))
        self.invariant = invariant


class SuperpositionError(InvariantViolation):
    pass


class Overlap(SuperpositionError):
    pass


class KingsAdjacent(SuperpositionError):
    pass


class IllegalCheck(SuperpositionError):
    pass


class BoardMismatch(SuperpositionError):
    pass


class Unsatisfiable(ItlbError):
    exit_code = 3


class IllegalMove(ItlbError):
    exit_code = 3


class IllegalPosition(ItlbError):
    exit_code = 3


class TooManyPieces(ItlbError):
    exit_code = 4


class ResourceLimit(ItlbError):
    exit_code = 4


class TableMismatch(ItlbError):
    exit_code = 6


class TableFileError(ItlbError):
    exit_code = 6


class ChecksumMismatch(TableFileError):
    pass


class VersionMismatch(TableFileError):
    pass


class ChainInvariantViolation(ItlbError):
    exit_code = 3


class BudgetExceeded(ItlbError):
    exit_code = 5

    def __init__(self, message: str, cursor: Any):
        super().__init__(message)
        self.cursor = cursor


class RowTooShort(ItlbError, ValueError):
    exit_code = 2


class IndexOutOfRange(ItlbError, IndexError):
    exit_code = 2
