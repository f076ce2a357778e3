"""The Magicians: a card game whose position values are transitive.

Cards show a good magician (``X``) on one face and a bad one (``O``) on the
other and fill two rows of a ``2xN`` board. A move swaps one upper card with
one lower card; a moved card that lands between two cards of the opposite face
turns over. The good side wants every card showing ``X``.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional

import numpy as np

from itlb.config import DEFAULT_WEIGHTS, HeuristicWeights
from itlb.errors import IndexOutOfRange, ParseError, RowTooShort
from itlb.intransitivity import Feasibility, potential_feasibility

MIN_COLUMNS = 2
MAX_COLUMNS = 10


class Face(Enum):
    GOOD = "X"
    BAD = "O"

    @property
    def opposite(self) -> Face:
        return Face.BAD if self is Face.GOOD else Face.GOOD


class Side(Enum):
    GOOD_PLAYER = "good"
    BAD_PLAYER = "bad"

    @property
    def friendly(self) -> Face:
        return Face.GOOD if self is Side.GOOD_PLAYER else Face.BAD

    @property
    def other(self) -> Side:
        return Side.BAD_PLAYER if self is Side.GOOD_PLAYER else Side.GOOD_PLAYER


Row = tuple[Face, ...]


def parse_row(text: str, offset: int = 0) -> Row:
    row = []
    for i, letter in enumerate(text.strip().upper()):
        try:
            row.append(Face(letter))
        except ValueError:
            raise ParseError(f"unknown face {letter!r}, expected X or O", offset + i)
    return tuple(row)


def row_text(row: Sequence[Face]) -> str:
    return "".join(face.value for face in row)


@dataclass(frozen=True)
class Swap:
    upper_col: int
    lower_col: int

    @property
    def text(self) -> str:
        return f"u{self.upper_col} l{self.lower_col}"

    @classmethod
    def parse(cls, text: str) -> Swap:
        parts = text.strip().lower().split()
        if len(parts) != 2 or parts[0][:1] != "u" or parts[1][:1] != "l":
            raise ParseError(f"swap must look like 'u1 l0', got {text!r}")
        try:
            return cls(int(parts[0][1:]), int(parts[1][1:]))
        except ValueError:
            raise ParseError(f"column numbers expected in {text!r}", len(parts[0]) + 1)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class MagBoard:
    upper: Row
    lower: Row

    def __post_init__(self):
        object.__setattr__(self, "upper", tuple(Face(f) for f in self.upper))
        object.__setattr__(self, "lower", tuple(Face(f) for f in self.lower))
        if len(self.upper) != len(self.lower):
            raise ValueError(f"rows differ in length: {len(self.upper)} vs {len(self.lower)}")
        if not MIN_COLUMNS <= len(self.upper) <= MAX_COLUMNS:
            raise ValueError(f"{len(self.upper)} columns outside {MIN_COLUMNS}..{MAX_COLUMNS}")

    @classmethod
    def parse(cls, text: str) -> MagBoard:
        upper, sep, lower = text.strip().partition("/")
        if not sep:
            raise ParseError(f"board must look like 'XOX/OXO', got {text!r}")
        return cls(parse_row(upper), parse_row(lower, len(upper) + 1))

    @classmethod
    def uniform(cls, n: int, face: Face) -> MagBoard:
        return cls((face,) * n, (face,) * n)

    @property
    def n(self) -> int:
        return len(self.upper)

    @property
    def text(self) -> str:
        return f"{row_text(self.upper)}/{row_text(self.lower)}"

    def count(self, face: Face) -> int:
        return self.upper.count(face) + self.lower.count(face)

    @property
    def code(self) -> int:
        """Bit i is upper column i, bit n+i lower column i; a set bit is a good face."""
        bits = [face is Face.GOOD for face in self.upper + self.lower]
        return sum(1 << i for i, bit in enumerate(bits) if bit)

    @classmethod
    def from_code(cls, code: int, n: int) -> MagBoard:
        faces = [Face.GOOD if code >> i & 1 else Face.BAD for i in range(2 * n)]
        return cls(tuple(faces[:n]), tuple(faces[n:]))

    def flipped_rows(self) -> MagBoard:
        return MagBoard(self.lower, self.upper)

    def __str__(self) -> str:
        return self.text


def _swap_code(code: int, n: int, u: int, v: int) -> int:
    mask = (1 << n) - 1
    upper, lower = code & mask, code >> n
    a, b = upper >> u & 1, lower >> v & 1
    upper = upper & ~(1 << u) | b << u
    lower = lower & ~(1 << v) | a << v
    # the moved cards sit in different rows, so their flips are independent
    if 0 < u < n - 1 and upper >> (u - 1) & 1 == upper >> (u + 1) & 1 == 1 - b:
        upper ^= 1 << u
    if 0 < v < n - 1 and lower >> (v - 1) & 1 == lower >> (v + 1) & 1 == 1 - a:
        lower ^= 1 << v
    return upper | lower << n


def swaps(n: int) -> Iterator[Swap]:
    for u in range(n):
        for v in range(n):
            yield Swap(u, v)


def apply_swap(board: MagBoard, swap: Swap) -> MagBoard:
    n = board.n
    if not (0 <= swap.upper_col < n and 0 <= swap.lower_col < n):
        raise IndexOutOfRange(f"swap {swap.text} outside a board of {n} columns")
    return MagBoard.from_code(_swap_code(board.code, n, swap.upper_col, swap.lower_col), n)


def _bfs_to_goal(board: MagBoard) -> dict[int, tuple[int, Swap] | None] | None:
    n = board.n
    goal = (1 << 2 * n) - 1
    start = board.code
    parents: dict[int, tuple[int, Swap] | None] = {start: None}
    queue = deque([start])
    while queue:
        code = queue.popleft()
        if code == goal:
            return parents
        for swap in swaps(n):
            child = _swap_code(code, n, swap.upper_col, swap.lower_col)
            if child not in parents:
                parents[child] = (code, swap)
                queue.append(child)
    return None


def optimal_line(board: MagBoard) -> Optional[list[tuple[Swap, MagBoard]]]:
    """One shortest swap sequence to the all-good board, or ``None`` when it cannot be reached."""
    parents = _bfs_to_goal(board)
    if parents is None:
        return None
    n = board.n
    code = (1 << 2 * n) - 1
    line = []
    while parents[code] is not None:
        previous, swap = parents[code]  # type: ignore[misc]
        line.append((swap, MagBoard.from_code(code, n)))
        code = previous
    return line[::-1]


def perfect_value(board: MagBoard) -> Optional[int]:
    """Fewest swaps that turn every card good."""
    line = optimal_line(board)
    return None if line is None else len(line)


def perfect_values(n: int) -> np.ndarray:
    """Perfect value of every board of width ``n`` indexed by :attr:`MagBoard.code`; -1 is unreachable."""
    states = 1 << 2 * n
    predecessors: list[list[int]] = [[] for _ in range(states)]
    for code in range(states):
        for u in range(n):
            for v in range(n):
                predecessors[_swap_code(code, n, u, v)].append(code)
    values = np.full(states, -1, dtype=np.int32)
    goal = states - 1
    values[goal] = 0
    queue = deque([goal])
    while queue:
        code = queue.popleft()
        for parent in predecessors[code]:
            if values[parent] < 0:
                values[parent] = values[code] + 1
                queue.append(parent)
    logging.debug(f"Magicians width {n}: {int(np.count_nonzero(values >= 0))} of {states} boards can be won")
    return values


def pair_distance(row: Sequence[Face], side: Side = Side.GOOD_PLAYER) -> int:
    """Fewest cells to change before two friendly cards sit one cell apart."""
    n = len(row)
    if n < 3:
        raise RowTooShort(f"a working pair needs three cells, row has {n}")
    friendly = side.friendly
    return min((row[i] is not friendly) + (row[i + 2] is not friendly) for i in range(n - 2))


def row_value(row: Sequence[Face], side: Side = Side.GOOD_PLAYER, weights: HeuristicWeights = DEFAULT_WEIGHTS) -> Fraction:
    n = len(row)
    friendly = side.friendly
    mid = Fraction(n - 1, 2)
    cells = [i for i, face in enumerate(row) if face is friendly]
    value = weights.good * len(cells) + weights.centrality * sum(1 / (1 + abs(i - mid)) for i in cells)
    if n >= 3:
        pairs = sum(row[i] is friendly and row[i + 2] is friendly for i in range(n - 2))
        value += weights.pair * pairs - weights.distance * pair_distance(row, side)
    return Fraction(value)


def heuristic_value(board: MagBoard, side: Side = Side.GOOD_PLAYER, weights: HeuristicWeights = DEFAULT_WEIGHTS) -> Fraction:
    return row_value(board.upper, side, weights) + row_value(board.lower, side, weights)


def best_swaps(board: MagBoard, side: Side, weights: HeuristicWeights = DEFAULT_WEIGHTS) -> tuple[Fraction, list[Swap]]:
    """Every swap reaching the highest heuristic sum for ``side``."""
    scored = [(heuristic_value(apply_swap(board, swap), side, weights), swap) for swap in swaps(board.n)]
    top = max(value for value, _ in scored)
    return top, [swap for value, swap in scored if value == top]


def best_swap(
    board: MagBoard,
    side: Side,
    rng: np.random.Generator | None = None,
    weights: HeuristicWeights = DEFAULT_WEIGHTS,
) -> Swap:
    """The chief magician's move; ties go to a uniform draw from ``rng`` (first in column order without one)."""
    _, candidates = best_swaps(board, side, weights)
    if rng is None:
        return candidates[0]
    return candidates[int(rng.integers(len(candidates)))]


def canonical_rows(n: int = 3) -> list[Row]:
    """Rows of width ``n`` up to mirroring, each written with its good faces leftmost."""
    seen = {}
    for code in range(1 << n):
        row = tuple(Face.GOOD if code >> (n - 1 - i) & 1 else Face.BAD for i in range(n))
        key = max(row_text(row), row_text(row[::-1]))
        seen.setdefault(key, parse_row(key))
    return list(seen.values())


def row_order(n: int = 3, weights: HeuristicWeights = DEFAULT_WEIGHTS) -> str:
    rows = sorted(canonical_rows(n), key=lambda row: (row_value(row, weights=weights), row_text(row)))
    parts = [row_text(rows[0])]
    for previous, row in zip(rows, rows[1:]):
        equal = row_value(previous, weights=weights) == row_value(row, weights=weights)
        parts.append(("= " if equal else "< ") + row_text(row))
    return " ".join(parts)


@dataclass(frozen=True)
class TransitivityReport:
    n: int
    boards: int
    triples: int
    violations: int
    feasibility: Feasibility
    order: str

    @property
    def transitive(self) -> bool:
        return self.violations == 0 and self.feasibility.feasible

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "boards": self.boards,
            "triples": self.triples,
            "violations": self.violations,
            "feasible": self.feasibility.feasible,
            "order": self.order,
        }


def _ranks(boards: Sequence[MagBoard], weights: HeuristicWeights) -> np.ndarray:
    values = [heuristic_value(board, weights=weights) for board in boards]
    levels = {value: rank for rank, value in enumerate(sorted(set(values)))}
    return np.array([levels[value] for value in values], dtype=np.int64)


def verify_transitivity(
    n: int = 3,
    samples: int | None = None,
    seed: int = 0,
    weights: HeuristicWeights = DEFAULT_WEIGHTS,
    feasibility_boards: int = 64,
) -> TransitivityReport:
    """Check that "at least as valuable" is transitive over boards of width ``n``.

    Without ``samples`` every triple is checked; otherwise ``samples`` random
    triples are drawn. The strict preferences over (up to) ``feasibility_boards``
    boards are also handed to :func:`potential_feasibility`.
    """
    boards = [MagBoard.from_code(code, n) for code in range(1 << 2 * n)]
    ranks = _ranks(boards, weights)
    if samples is None:
        ge = (ranks[:, None] >= ranks[None, :]).astype(np.int64)
        # ge[u, v] * ge[v, w] counted for every w where ge[u, w] fails
        violations = int(((ge @ ge) * (1 - ge)).sum())
        triples = len(boards) ** 3
    else:
        rng = np.random.default_rng(seed)
        u, v, w = rng.integers(len(boards), size=(3, samples))
        violations = int(np.count_nonzero((ranks[u] >= ranks[v]) & (ranks[v] >= ranks[w]) & (ranks[u] < ranks[w])))
        triples = samples
    picked = np.random.default_rng(seed).permutation(len(boards))[:feasibility_boards]
    edges = [(boards[a].text, boards[b].text) for a in picked for b in picked if ranks[a] > ranks[b]]
    feasibility = potential_feasibility(edges, nodes=[boards[a].text for a in picked])
    report = TransitivityReport(n, len(boards), triples, violations, feasibility, row_order(3, weights))
    logging.info(f"Magicians transitivity: {report.to_dict()}")
    return report


Policy = Callable[[MagBoard, Side], Swap]


def heuristic_policy(rng: np.random.Generator | None = None, weights: HeuristicWeights = DEFAULT_WEIGHTS) -> Policy:
    def policy(board: MagBoard, side: Side) -> Swap:
        return best_swap(board, side, rng, weights)

    return policy


@dataclass(frozen=True)
class MatchResult:
    winner: Side | None
    reason: str
    moves: tuple[tuple[Side, Swap, MagBoard], ...]
    final: MagBoard


def play_match(
    start: MagBoard,
    good: Policy,
    bad: Policy,
    max_plies: int = 1000,
    observer: Callable[[Side, Swap, MagBoard], None] | None = None,
) -> MatchResult:
    """Alternate swaps, good side first, until one face fills the board or a (board, side) state repeats."""
    board, side = start, Side.GOOD_PLAYER
    seen: set[tuple[MagBoard, Side]] = set()
    moves: list[tuple[Side, Swap, MagBoard]] = []
    while True:
        if board.count(Face.BAD) == 0:
            return MatchResult(Side.GOOD_PLAYER, "all-good", tuple(moves), board)
        if board.count(Face.GOOD) == 0:
            return MatchResult(Side.BAD_PLAYER, "all-bad", tuple(moves), board)
        if (board, side) in seen:
            return MatchResult(None, "repetition", tuple(moves), board)
        if len(moves) >= max_plies:
            return MatchResult(None, "ply-limit", tuple(moves), board)
        seen.add((board, side))
        swap = (good if side is Side.GOOD_PLAYER else bad)(board, side)
        board = apply_swap(board, swap)
        moves.append((side, swap, board))
        if observer is not None:
            observer(side, swap, board)
        side = side.other


THREE_AGAINST_THREE = MagBoard.parse("XOX/OXO")
# a bad card between two good ones turns good: 3 against 3 becomes 4 against 2
USEFUL_MOVE = (THREE_AGAINST_THREE, Swap(1, 0))
# nothing turns over and the working pair in the upper row is broken
WORSENING_MOVE = (THREE_AGAINST_THREE, Swap(0, 0))
# both moved cards turn over, so the counts stay as they were
USELESS_MOVE = (MagBoard.parse("XXX/OOO"), Swap(1, 1))
