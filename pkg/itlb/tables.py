from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from itlb.board import PROMOTION_KINDS, BoardSpec, Color, Kind, Piece, WholePosition
from itlb.errors import IllegalPosition, InvariantViolation, ParseError, TableMismatch

FORMAT_VERSION = 1
MAX_PIECES = 5
DTM_CAP = 63
DRAW_CONVENTION = "pure game-theoretic values: no 50-move rule, no repetition draws, unresolved positions are draws"

# packed slot byte: two verdict bits, six dtm bits (63 means "see overflow")
CODE_ILLEGAL = 0
CODE_DRAW = 1
CODE_WHITE_WINS = 2
CODE_BLACK_WINS = 3


class Verdict(Enum):
    WHITE_WINS = "WhiteWins"
    BLACK_WINS = "BlackWins"
    DRAW = "Draw"

    @property
    def winner(self) -> Color | None:
        if self is Verdict.WHITE_WINS:
            return Color.WHITE
        if self is Verdict.BLACK_WINS:
            return Color.BLACK
        return None

    @classmethod
    def for_winner(cls, color: Color) -> Verdict:
        return cls.WHITE_WINS if color is Color.WHITE else cls.BLACK_WINS


@dataclass(frozen=True)
class Outcome:
    verdict: Verdict
    dtm: int | None = None

    def __post_init__(self):
        if (self.verdict is Verdict.DRAW) != (self.dtm is None):
            raise InvariantViolation("dtm-iff-decisive", f"{self.verdict.value} with dtm={self.dtm}")
        if self.dtm is not None and self.dtm < 0:
            raise InvariantViolation("dtm-non-negative", str(self.dtm))

    @classmethod
    def win(cls, color: Color, dtm: int) -> Outcome:
        return cls(Verdict.for_winner(color), dtm)

    @classmethod
    def draw(cls) -> Outcome:
        return cls(Verdict.DRAW)

    @property
    def winner(self) -> Color | None:
        return self.verdict.winner

    @property
    def text(self) -> str:
        return self.verdict.value if self.dtm is None else f"{self.verdict.value} dtm={self.dtm}"

    @classmethod
    def parse(cls, text: str) -> Outcome:
        verdict, _, dtm = text.strip().partition(" dtm=")
        try:
            return cls(Verdict(verdict), int(dtm) if dtm else None)
        except ValueError:
            raise ParseError(f"malformed outcome {text!r}")

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class MaterialSignature:
    pieces: tuple[Piece, ...]

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(sorted((Piece(*p) for p in self.pieces), key=lambda p: p.sort_key)))
        for color in Color:
            if self.pieces.count(Piece(color, Kind.KING)) != 1:
                raise InvariantViolation("one-King-per-color", f"material {self.code}")

    @classmethod
    def of(cls, pieces: Iterable[Piece]) -> MaterialSignature:
        return cls(tuple(pieces))

    @classmethod
    def from_kinds(cls, white: Iterable[Kind], black: Iterable[Kind]) -> MaterialSignature:
        return cls(tuple(Piece(Color.WHITE, k) for k in white) + tuple(Piece(Color.BLACK, k) for k in black))

    @classmethod
    def parse(cls, text: str) -> MaterialSignature:
        white, sep, black = text.strip().upper().partition("V")
        if not sep:
            raise ParseError(f"material {text!r} must look like 'KQvK'")
        try:
            return cls.from_kinds((Kind(c) for c in white), (Kind(c) for c in black))
        except ValueError:
            raise ParseError(f"unknown piece letter in material {text!r}")

    @property
    def code(self) -> str:
        white = "".join(p.kind.value for p in self.pieces if p.color is Color.WHITE)
        black = "".join(p.kind.value for p in self.pieces if p.color is Color.BLACK)
        return f"{white}v{black}"

    @property
    def has_pawns(self) -> bool:
        return any(p.kind is Kind.PAWN for p in self.pieces)

    def children(self, board: BoardSpec) -> list[MaterialSignature]:
        """Materials reachable by one capture or one promotion, in a fixed order."""
        found: list[MaterialSignature] = []
        for i, piece in enumerate(self.pieces):
            rest = self.pieces[:i] + self.pieces[i + 1 :]
            if piece.kind is not Kind.KING:
                found.append(MaterialSignature(rest))
            if piece.kind is Kind.PAWN and board.allows_pawns:
                found.extend(MaterialSignature(rest + (Piece(piece.color, kind),)) for kind in PROMOTION_KINDS)
                # promotion with capture
                for j, victim in enumerate(rest):
                    if victim.color is not piece.color and victim.kind is not Kind.KING:
                        remaining = rest[:j] + rest[j + 1 :]
                        found.extend(MaterialSignature(remaining + (Piece(piece.color, kind),)) for kind in PROMOTION_KINDS)
        return list(dict.fromkeys(found))

    def __len__(self) -> int:
        return len(self.pieces)

    def __str__(self) -> str:
        return self.code


def slot_count(material: MaterialSignature, board: BoardSpec) -> int:
    return 2 * board.size ** len(material)


def slot_index(material: MaterialSignature, board: BoardSpec, occupancy: Mapping[int, Piece], to_move: Color) -> int:
    """Lexicographic square-tuple index (pieces in material order) with the side-to-move bit lowest."""
    squares: dict[Piece, list[int]] = {}
    for sq, piece in sorted(occupancy.items()):
        squares.setdefault(piece, []).append(sq)
    index = 0
    for piece in material.pieces:
        bucket = squares.get(piece)
        if not bucket:
            raise TableMismatch(f"position does not match material {material.code}")
        index = index * board.size + bucket.pop(0)
    if any(squares.values()):
        raise TableMismatch(f"position does not match material {material.code}")
    return index * 2 + int(to_move)


def slot_position(material: MaterialSignature, board: BoardSpec, slot: int) -> WholePosition:
    """The position a slot stands for; an illegal slot raises the invariant it breaks."""
    rest = slot >> 1
    squares = []
    for _ in material.pieces:
        rest, sq = divmod(rest, board.size)
        squares.append(sq)
    placements = tuple((board.square(sq), piece) for sq, piece in zip(reversed(squares), material.pieces))
    return WholePosition(board, placements, Color(slot & 1))


def pack(code: int, dtm: int) -> int:
    return (code << 6) | min(dtm, DTM_CAP)


@dataclass(eq=False)
class SolvedTable:
    board: BoardSpec
    material: MaterialSignature
    packed: np.ndarray
    overflow: dict[int, int] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def count(self) -> int:
        return int(self.packed.shape[0])

    def outcome_at(self, slot: int) -> Outcome | None:
        byte = int(self.packed[slot])
        code, dtm = byte >> 6, byte & DTM_CAP
        if code == CODE_ILLEGAL:
            return None
        if code == CODE_DRAW:
            return Outcome.draw()
        if dtm == DTM_CAP:
            dtm = self.overflow[slot]
        return Outcome.win(Color.WHITE if code == CODE_WHITE_WINS else Color.BLACK, dtm)

    def probe(self, pos: WholePosition) -> Outcome:
        if pos.board != self.board:
            raise TableMismatch(f"table is for {self.board.text}, position is on {pos.board.text}")
        material = MaterialSignature.of(pos.material)
        if material != self.material:
            raise TableMismatch(f"table holds {self.material.code}, position is {material.code}")
        outcome = self.outcome_at(slot_index(self.material, self.board, pos.occupancy, pos.to_move))
        if outcome is None:
            raise IllegalPosition("position maps to an illegal table slot")
        return outcome

    def summary(self) -> dict[str, int]:
        codes = self.packed >> 6
        return {
            "slots": self.count,
            "legal": int(np.count_nonzero(codes)),
            "draws": int(np.count_nonzero(codes == CODE_DRAW)),
            "white_wins": int(np.count_nonzero(codes == CODE_WHITE_WINS)),
            "black_wins": int(np.count_nonzero(codes == CODE_BLACK_WINS)),
            "max_dtm": max([int(np.max(self.packed[codes >= CODE_WHITE_WINS] & DTM_CAP, initial=0)), *self.overflow.values()]),
        }
