from __future__ import annotations

import functools
import itertools
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import TYPE_CHECKING, NamedTuple, Optional

from itlb.errors import (
    BoardMismatch,
    IllegalCheck,
    InvariantViolation,
    KingsAdjacent,
    Overlap,
    ParseError,
    Unsatisfiable,
)

if TYPE_CHECKING:
    import numpy as np

#
# Board text codec
#
#   half   := color ":" piece ("," piece)*
#   color  := "W" | "B"
#   piece  := kind square            kind in K Q R B N P (case-insensitive when decoding)
#   square := file rank              file a..h, rank 1..8, both within the board
#   whole  := half "|" half "|" ("wtm" | "btm") "|" "board=" FILES "x" RANKS "," topology
#
# The King is written first, the remaining pieces follow in ascending square
# index (rank-major), so the encoding of a value is byte-deterministic.
# Example: "W:Kf6,Qg6 | B:Kh8 | wtm | board=8x8,planar"
#

MIN_SIDE = 3
MAX_SIDE = 8


class Topology(Enum):
    PLANAR = "planar"
    CYLINDER = "cylinder"
    TORUS = "torus"


class Color(IntEnum):
    WHITE = 0
    BLACK = 1

    @property
    def other(self) -> Color:
        return Color.BLACK if self is Color.WHITE else Color.WHITE

    @property
    def letter(self) -> str:
        return "W" if self is Color.WHITE else "B"

    @property
    def label(self) -> str:
        return "White" if self is Color.WHITE else "Black"


class Kind(Enum):
    KING = "K"
    QUEEN = "Q"
    ROOK = "R"
    BISHOP = "B"
    KNIGHT = "N"
    PAWN = "P"

    @property
    def order(self) -> int:
        return KIND_ORDER.index(self)


KIND_ORDER = (Kind.KING, Kind.QUEEN, Kind.ROOK, Kind.BISHOP, Kind.KNIGHT, Kind.PAWN)
PROMOTION_KINDS = (Kind.QUEEN, Kind.ROOK, Kind.BISHOP, Kind.KNIGHT)
SLIDER_DIRECTIONS = {
    Kind.ROOK: ((1, 0), (-1, 0), (0, 1), (0, -1)),
    Kind.BISHOP: ((1, 1), (1, -1), (-1, 1), (-1, -1)),
    Kind.QUEEN: ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)),
}
KING_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))
KNIGHT_STEPS = ((1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2))


class Piece(NamedTuple):
    color: Color
    kind: Kind

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.color.value, self.kind.order)

    def __str__(self) -> str:
        return f"{self.color.letter}{self.kind.value}"


class Square(NamedTuple):
    file: int
    rank: int

    @property
    def name(self) -> str:
        return f"{chr(ord('a') + self.file)}{self.rank + 1}"


@dataclass(frozen=True)
class BoardSpec:
    files: int = 8
    ranks: int = 8
    topology: Topology = Topology.PLANAR

    def __post_init__(self):
        if not (MIN_SIDE <= self.files <= MAX_SIDE and MIN_SIDE <= self.ranks <= MAX_SIDE):
            raise InvariantViolation("board-size", f"{self.files}x{self.ranks} outside {MIN_SIDE}..{MAX_SIDE}")

    @property
    def size(self) -> int:
        return self.files * self.ranks

    @property
    def text(self) -> str:
        return f"{self.files}x{self.ranks},{self.topology.value}"

    @property
    def allows_pawns(self) -> bool:
        return self.topology is not Topology.TORUS

    def index(self, square: Square) -> int:
        return square.rank * self.files + square.file

    def square(self, index: int) -> Square:
        rank, file = divmod(index, self.files)
        return Square(file, rank)

    def contains(self, square: Square) -> bool:
        return 0 <= square.file < self.files and 0 <= square.rank < self.ranks

    def parse_square(self, text: str, position: int = 0) -> Square:
        if len(text) < 2 or not text[0].isalpha() or not text[1:].isdigit():
            raise ParseError(f"malformed square {text!r}", position)
        square = Square(ord(text[0].lower()) - ord("a"), int(text[1:]) - 1)
        if not self.contains(square):
            raise ParseError(f"square {text!r} outside {self.files}x{self.ranks} board", position)
        return square

    def step(self, index: int, df: int, dr: int) -> int | None:
        """Square reached from ``index`` by the displacement (df, dr) under the topology."""
        rank, file = divmod(index, self.files)
        file, rank = file + df, rank + dr
        if self.topology is not Topology.PLANAR:
            file %= self.files
        if self.topology is Topology.TORUS:
            rank %= self.ranks
        if not (0 <= file < self.files and 0 <= rank < self.ranks):
            return None
        return rank * self.files + file

    def promotion_rank(self, color: Color) -> int | None:
        if not self.allows_pawns:
            return None
        return self.ranks - 1 if color is Color.WHITE else 0

    def pawn_rank_ok(self, rank: int) -> bool:
        return 0 < rank < self.ranks - 1

    @classmethod
    def parse(cls, text: str, position: int = 0) -> BoardSpec:
        size, _, topology = text.strip().partition(",")
        files, sep, ranks = size.strip().lower().partition("x")
        if not sep or not files.isdigit() or not ranks.isdigit():
            raise ParseError(f"malformed board size {size!r}", position)
        try:
            topo = Topology(topology.strip().lower() or "planar")
        except ValueError:
            raise ParseError(f"unknown topology {topology.strip()!r}", position + len(size) + 1)
        return cls(int(files), int(ranks), topo)


STANDARD_BOARD = BoardSpec()


@dataclass(frozen=True)
class Geometry:
    """Precomputed step tables of one board; rays stop before leaving the board or revisiting their origin."""

    board: BoardSpec
    king: tuple[frozenset[int], ...]
    knight: tuple[frozenset[int], ...]
    rays: Mapping[Kind, tuple[tuple[tuple[int, ...], ...], ...]]
    between: Mapping[Kind, tuple[Mapping[int, tuple[tuple[int, ...], ...]], ...]]
    pawn_push: tuple[tuple[Optional[int], ...], ...]
    pawn_captures: tuple[tuple[tuple[int, ...], ...], ...]


def _leaper(board: BoardSpec, sq: int, steps: Sequence[tuple[int, int]]) -> frozenset[int]:
    targets = (board.step(sq, df, dr) for df, dr in steps)
    return frozenset(t for t in targets if t is not None and t != sq)


def _ray(board: BoardSpec, sq: int, df: int, dr: int) -> tuple[int, ...]:
    ray = []
    current = board.step(sq, df, dr)
    while current is not None and current != sq:
        ray.append(current)
        current = board.step(current, df, dr)
    return tuple(ray)


@functools.lru_cache(maxsize=None)
def geometry(board: BoardSpec) -> Geometry:
    squares = range(board.size)
    rays = {kind: tuple(tuple(_ray(board, sq, df, dr) for df, dr in dirs) for sq in squares) for kind, dirs in SLIDER_DIRECTIONS.items()}
    between: dict[Kind, tuple[Mapping[int, tuple[tuple[int, ...], ...]], ...]] = {}
    for kind, per_square in rays.items():
        tables = []
        for sq_rays in per_square:
            paths: dict[int, list[tuple[int, ...]]] = {}
            for ray in sq_rays:
                for i, target in enumerate(ray):
                    path = ray[:i]
                    if path not in paths.setdefault(target, []):
                        paths[target].append(path)
            tables.append({target: tuple(p) for target, p in paths.items()})
        between[kind] = tuple(tables)
    pawn_push = []
    pawn_captures = []
    for color in Color:
        dr = 1 if color is Color.WHITE else -1
        pawn_push.append(tuple(board.step(sq, 0, dr) if board.allows_pawns else None for sq in squares))
        pawn_captures.append(
            tuple(tuple(sorted(_leaper(board, sq, ((1, dr), (-1, dr))))) if board.allows_pawns else () for sq in squares)
        )
    return Geometry(
        board=board,
        king=tuple(_leaper(board, sq, KING_STEPS) for sq in squares),
        knight=tuple(_leaper(board, sq, KNIGHT_STEPS) for sq in squares),
        rays=rays,
        between=between,
        pawn_push=tuple(pawn_push),
        pawn_captures=tuple(pawn_captures),
    )


Placements = tuple[tuple[Square, Piece], ...]


def _normalize(board: BoardSpec, placements: Placements | Mapping[Square, Piece]) -> Placements:
    items = placements.items() if isinstance(placements, Mapping) else placements
    return tuple(sorted(((Square(*sq), Piece(*piece)) for sq, piece in items), key=lambda item: board.index(item[0])))


def _check_placements(board: BoardSpec, placements: Placements) -> None:
    seen = set()
    for square, piece in placements:
        if not board.contains(square):
            raise InvariantViolation("square-in-range", square.name)
        if square in seen:
            raise Overlap("distinct-squares", f"two pieces on {square.name}")
        seen.add(square)
        if piece.kind is Kind.PAWN:
            if not board.allows_pawns:
                raise InvariantViolation("no-pawn-on-torus", square.name)
            if not board.pawn_rank_ok(square.rank):
                raise InvariantViolation("pawn-rank", f"pawn on {square.name}")


@dataclass(frozen=True)
class HalfPosition:
    """One side's piece placement, the per-player position that gets superposed."""

    color: Color
    placements: Placements
    board: BoardSpec = STANDARD_BOARD

    def __post_init__(self):
        object.__setattr__(self, "placements", _normalize(self.board, self.placements))
        if any(piece.color is not self.color for _, piece in self.placements):
            raise InvariantViolation("single-color", f"{self.color.label} half holds foreign pieces")
        kings = sum(piece.kind is Kind.KING for _, piece in self.placements)
        if kings != 1:
            raise InvariantViolation("one-King", f"{kings} kings")
        _check_placements(self.board, self.placements)

    @classmethod
    def of(cls, color: Color, kinds: Mapping[Square | str, Kind], board: BoardSpec = STANDARD_BOARD) -> HalfPosition:
        placements = []
        for square, kind in kinds.items():
            sq = board.parse_square(square) if isinstance(square, str) else square
            placements.append((sq, Piece(color, kind)))
        return cls(color, tuple(placements), board)

    @property
    def material(self) -> tuple[Kind, ...]:
        return tuple(sorted((piece.kind for _, piece in self.placements), key=lambda k: k.order))


@dataclass(frozen=True)
class WholePosition:
    """Both sides' pieces on one board plus the side to move."""

    board: BoardSpec
    placements: Placements
    to_move: Color = Color.WHITE

    def __post_init__(self):
        from itlb.movegen import square_attacked

        object.__setattr__(self, "placements", _normalize(self.board, self.placements))
        _check_placements(self.board, self.placements)
        kings = {}
        for color in Color:
            squares = [sq for sq, piece in self.placements if piece == Piece(color, Kind.KING)]
            if len(squares) != 1:
                raise InvariantViolation("one-King-per-color", f"{color.label} has {len(squares)} kings")
            kings[color] = self.board.index(squares[0])
        geo = geometry(self.board)
        if kings[Color.BLACK] in geo.king[kings[Color.WHITE]]:
            raise KingsAdjacent("kings-not-adjacent")
        waiting = self.to_move.other
        if square_attacked(geo, self.occupancy, kings[waiting], self.to_move):
            raise IllegalCheck("non-mover-not-in-check", f"{waiting.label} in check with {self.to_move.label} to move")

    @functools.cached_property
    def occupancy(self) -> dict[int, Piece]:
        return {self.board.index(sq): piece for sq, piece in self.placements}

    @property
    def material(self) -> tuple[Piece, ...]:
        return tuple(sorted((piece for _, piece in self.placements), key=lambda p: p.sort_key))

    def half(self, color: Color) -> HalfPosition:
        return HalfPosition(color, tuple(item for item in self.placements if item[1].color is color), self.board)

    @classmethod
    def from_occupancy(cls, board: BoardSpec, occupancy: Mapping[int, Piece], to_move: Color) -> WholePosition:
        return cls(board, tuple((board.square(sq), piece) for sq, piece in occupancy.items()), to_move)


def superpose(white: HalfPosition, black: HalfPosition) -> WholePosition:
    """Lay a White and a Black half-position on one board, White to move."""
    if white.board != black.board:
        raise BoardMismatch("same-board", f"{white.board.text} vs {black.board.text}")
    if white.color is not Color.WHITE or black.color is not Color.BLACK:
        raise InvariantViolation("superpose-colors", "expected a White half and a Black half")
    shared = {sq for sq, _ in white.placements} & {sq for sq, _ in black.placements}
    if shared:
        raise Overlap("distinct-squares", ",".join(sorted(sq.name for sq in shared)))
    return WholePosition(white.board, white.placements + black.placements, Color.WHITE)


def superposable(white: HalfPosition, black: HalfPosition) -> bool:
    try:
        superpose(white, black)
    except InvariantViolation:
        return False
    return True


def check_material(material: Sequence[Kind], board: BoardSpec) -> tuple[Kind, ...]:
    kinds = tuple(sorted(material, key=lambda k: k.order))
    if kinds.count(Kind.KING) != 1:
        raise Unsatisfiable(f"material {''.join(k.value for k in kinds)} must hold exactly one King")
    pawns = kinds.count(Kind.PAWN)
    if pawns and not board.allows_pawns:
        raise Unsatisfiable("pawns cannot be placed on a torus")
    if len(kinds) > board.size or pawns > board.files * (board.ranks - 2):
        raise Unsatisfiable(f"material {''.join(k.value for k in kinds)} does not fit on {board.text}")
    return kinds


def random_half(material: Sequence[Kind], color: Color, board: BoardSpec, rng: np.random.Generator) -> HalfPosition:
    """Uniform HalfPosition with the given material, by rejection sampling over square tuples."""
    kinds = check_material(material, board)
    while True:
        squares = [int(s) for s in rng.integers(0, board.size, size=len(kinds))]
        if len(set(squares)) != len(squares):
            continue
        if any(kind is Kind.PAWN and not board.pawn_rank_ok(sq // board.files) for kind, sq in zip(kinds, squares)):
            continue
        return HalfPosition(color, tuple((board.square(sq), Piece(color, kind)) for kind, sq in zip(kinds, squares)), board)


def enumerate_halves(material: Sequence[Kind], color: Color, board: BoardSpec) -> Iterator[HalfPosition]:
    """Every HalfPosition with the given material once, in lexicographic square-tuple order."""
    kinds = check_material(material, board)
    for squares in itertools.product(range(board.size), repeat=len(kinds)):
        if len(set(squares)) != len(squares):
            continue
        # identical pieces: keep only the ascending assignment
        if any(kinds[i] is kinds[i + 1] and squares[i] > squares[i + 1] for i in range(len(kinds) - 1)):
            continue
        if any(kind is Kind.PAWN and not board.pawn_rank_ok(sq // board.files) for kind, sq in zip(kinds, squares)):
            continue
        yield HalfPosition(color, tuple((board.square(sq), Piece(color, kind)) for kind, sq in zip(kinds, squares)), board)


def parse_material(text: str) -> tuple[Kind, ...]:
    try:
        return tuple(Kind(letter) for letter in text.strip().upper())
    except ValueError:
        raise ParseError(f"unknown piece letter in material {text!r}")


def _encode_half(half: HalfPosition) -> str:
    ordered = sorted(half.placements, key=lambda item: (item[1].kind is not Kind.KING, half.board.index(item[0])))
    return f"{half.color.letter}:" + ",".join(f"{piece.kind.value}{sq.name}" for sq, piece in ordered)


def encode(value: HalfPosition | WholePosition) -> str:
    if isinstance(value, HalfPosition):
        return _encode_half(value)
    side = "wtm" if value.to_move is Color.WHITE else "btm"
    halves = " | ".join(_encode_half(value.half(color)) for color in Color)
    return f"{halves} | {side} | board={value.board.text}"


def _decode_half(text: str, board: BoardSpec, offset: int) -> HalfPosition:
    stripped = text.lstrip()
    offset += len(text) - len(stripped)
    stripped = stripped.rstrip()
    letter, sep, body = stripped.partition(":")
    if not sep or letter.upper() not in ("W", "B"):
        raise ParseError("half-position must start with 'W:' or 'B:'", offset)
    color = Color.WHITE if letter.upper() == "W" else Color.BLACK
    placements = []
    position = offset + len(letter) + 1
    for token in body.split(","):
        item = token.strip()
        column = position + len(token) - len(token.lstrip())
        if not item:
            raise ParseError("empty piece token", column)
        try:
            kind = Kind(item[0].upper())
        except ValueError:
            raise ParseError(f"unknown piece letter {item[0]!r}", column)
        placements.append((board.parse_square(item[1:], column + 1), Piece(color, kind)))
        position += len(token) + 1
    return HalfPosition(color, tuple(placements), board)


def decode(text: str, board: BoardSpec | None = None) -> HalfPosition | WholePosition:
    """Inverse of :func:`encode`; a half-position decodes on ``board`` (8x8 planar by default)."""
    if "|" not in text:
        return _decode_half(text, board or STANDARD_BOARD, 0)
    fields = text.split("|")
    if len(fields) != 4:
        raise ParseError(f"whole position needs 4 '|'-separated fields, got {len(fields)}", 0)
    offsets = list(itertools.accumulate(len(f) + 1 for f in fields))
    board_field = fields[3].strip()
    if not board_field.startswith("board="):
        raise ParseError("missing 'board=' field", offsets[2])
    embedded = BoardSpec.parse(board_field[len("board=") :], offsets[2])
    if board is not None and board != embedded:
        raise BoardMismatch("same-board", f"{embedded.text} vs {board.text}")
    side = fields[2].strip().lower()
    if side not in ("wtm", "btm"):
        raise ParseError(f"side to move must be 'wtm' or 'btm', got {side!r}", offsets[1])
    first = _decode_half(fields[0], embedded, 0)
    second = _decode_half(fields[1], embedded, offsets[0])
    if first.color is second.color:
        raise InvariantViolation("one-half-per-color", f"two {first.color.label} halves")
    return WholePosition(embedded, first.placements + second.placements, Color.WHITE if side == "wtm" else Color.BLACK)
