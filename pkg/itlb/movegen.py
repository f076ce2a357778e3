from __future__ import annotations

from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Optional

from itlb.board import (
    PROMOTION_KINDS,
    BoardSpec,
    Color,
    Geometry,
    Kind,
    Piece,
    Square,
    WholePosition,
    geometry,
)
from itlb.errors import IllegalMove, ParseError

# (from, to, promotion) over square indices; the solver works on these directly
RawMove = tuple[int, int, Optional[Kind]]
Occupancy = Mapping[int, Piece]


@dataclass(frozen=True)
class Move:
    from_square: Square
    to_square: Square
    promotion: Kind | None = None

    @property
    def text(self) -> str:
        suffix = self.promotion.value.lower() if self.promotion else ""
        return f"{self.from_square.name}{self.to_square.name}{suffix}"

    @classmethod
    def parse(cls, text: str, board: BoardSpec) -> Move:
        text = text.strip()
        promotion = None
        if text and text[-1].isalpha() and len(text) >= 5 and text[-2].isdigit():
            try:
                promotion = Kind(text[-1].upper())
            except ValueError:
                raise ParseError(f"unknown promotion piece {text[-1]!r}", len(text) - 1)
            text = text[:-1]
        split = next((i for i in range(2, len(text)) if text[i].isalpha()), None)
        if split is None:
            raise ParseError(f"malformed move {text!r}", 0)
        return cls(board.parse_square(text[:split]), board.parse_square(text[split:], split), promotion)

    def __str__(self) -> str:
        return self.text


def _slider_reaches(geo: Geometry, occ: Occupancy, kind: Kind, origin: int, target: int) -> bool:
    paths = geo.between[kind][origin].get(target)
    if not paths:
        return False
    return any(all(sq not in occ for sq in path) for path in paths)


def square_attacked(geo: Geometry, occ: Occupancy, target: int, by: Color) -> bool:
    for sq, piece in occ.items():
        if piece.color is not by:
            continue
        kind = piece.kind
        if kind is Kind.KING:
            if target in geo.king[sq]:
                return True
        elif kind is Kind.KNIGHT:
            if target in geo.knight[sq]:
                return True
        elif kind is Kind.PAWN:
            if target in geo.pawn_captures[by][sq]:
                return True
        elif _slider_reaches(geo, occ, kind, sq, target):
            return True
    return False


def attacked_squares(geo: Geometry, occ: Occupancy, color: Color) -> set[int]:
    attacked: set[int] = set()
    for sq, piece in occ.items():
        if piece.color is not color:
            continue
        kind = piece.kind
        if kind is Kind.KING:
            attacked |= geo.king[sq]
        elif kind is Kind.KNIGHT:
            attacked |= geo.knight[sq]
        elif kind is Kind.PAWN:
            attacked.update(geo.pawn_captures[color][sq])
        else:
            for ray in geo.rays[kind][sq]:
                for target in ray:
                    attacked.add(target)
                    if target in occ:
                        break
    return attacked


def pseudo_moves(geo: Geometry, occ: Occupancy, color: Color) -> Iterator[RawMove]:
    seen: set[tuple[int, int]] = set()
    last_rank = geo.board.promotion_rank(color)
    for sq, piece in occ.items():
        if piece.color is not color:
            continue
        kind = piece.kind
        if kind is Kind.PAWN:
            targets = []
            push = geo.pawn_push[color][sq]
            if push is not None and push not in occ:
                targets.append(push)
            targets.extend(t for t in geo.pawn_captures[color][sq] if t in occ and occ[t].color is not color)
            for target in targets:
                if target // geo.board.files == last_rank:
                    for promotion in PROMOTION_KINDS:
                        yield (sq, target, promotion)
                else:
                    yield (sq, target, None)
            continue
        if kind is Kind.KING or kind is Kind.KNIGHT:
            steps = geo.king[sq] if kind is Kind.KING else geo.knight[sq]
            targets = sorted(t for t in steps if t not in occ or occ[t].color is not color)
        else:
            targets = []
            for ray in geo.rays[kind][sq]:
                for target in ray:
                    occupant = occ.get(target)
                    if occupant is None or occupant.color is not color:
                        targets.append(target)
                    if occupant is not None:
                        break
        for target in targets:
            if (sq, target) not in seen:
                seen.add((sq, target))
                yield (sq, target, None)


def make(occ: Occupancy, move: RawMove) -> dict[int, Piece]:
    origin, target, promotion = move
    child = dict(occ)
    piece = child.pop(origin)
    child[target] = Piece(piece.color, promotion) if promotion else piece
    return child


def king_square(occ: Occupancy, color: Color) -> int:
    king = Piece(color, Kind.KING)
    return next(sq for sq, piece in occ.items() if piece == king)


def generate(geo: Geometry, occ: Occupancy, color: Color) -> list[RawMove]:
    """Legal moves of ``color``: pseudo moves that leave its own King unattacked."""
    legal = []
    king = king_square(occ, color)
    for move in pseudo_moves(geo, occ, color):
        child = make(occ, move)
        own_king = move[1] if move[0] == king else king
        if not square_attacked(geo, child, own_king, color.other):
            legal.append(move)
    return legal


def in_check(geo: Geometry, occ: Occupancy, color: Color) -> bool:
    return square_attacked(geo, occ, king_square(occ, color), color.other)


def attacks(pos: WholePosition, color: Color) -> set[Square]:
    geo = geometry(pos.board)
    return {pos.board.square(sq) for sq in attacked_squares(geo, pos.occupancy, color)}


def legal_moves(pos: WholePosition) -> list[Move]:
    geo = geometry(pos.board)
    board = pos.board
    return [
        Move(board.square(origin), board.square(target), promotion)
        for origin, target, promotion in generate(geo, pos.occupancy, pos.to_move)
    ]


def apply(pos: WholePosition, move: Move) -> WholePosition:
    if move not in legal_moves(pos):
        raise IllegalMove(f"{move.text} is not legal in this position")
    board = pos.board
    child = make(pos.occupancy, (board.index(move.from_square), board.index(move.to_square), move.promotion))
    return WholePosition.from_occupancy(board, child, pos.to_move.other)


def is_checkmate(pos: WholePosition) -> bool:
    geo = geometry(pos.board)
    return not generate(geo, pos.occupancy, pos.to_move) and in_check(geo, pos.occupancy, pos.to_move)


def is_stalemate(pos: WholePosition) -> bool:
    geo = geometry(pos.board)
    return not generate(geo, pos.occupancy, pos.to_move) and not in_check(geo, pos.occupancy, pos.to_move)


def move_label(pos: WholePosition, move: Move) -> str:
    """Short algebraic label such as ``Qg7`` or ``exd8=Q``, without check marks."""
    piece = pos.occupancy[pos.board.index(move.from_square)]
    capture = pos.board.index(move.to_square) in pos.occupancy
    if piece.kind is Kind.PAWN:
        label = f"{move.from_square.name[0]}x{move.to_square.name}" if capture else move.to_square.name
    else:
        label = f"{piece.kind.value}{'x' if capture else ''}{move.to_square.name}"
    if move.promotion:
        label += f"={move.promotion.value}"
    return label
