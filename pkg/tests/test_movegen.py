from __future__ import annotations

import chess
import numpy as np
import pytest

from itlb.board import BoardSpec, Color, Kind, Piece, Topology, WholePosition, decode, geometry, random_half, superposable, superpose
from itlb.errors import IllegalMove, SuperpositionError
from itlb.movegen import (
    Move,
    apply,
    attacked_squares,
    attacks,
    is_checkmate,
    is_stalemate,
    legal_moves,
    move_label,
)

W, B = Color.WHITE, Color.BLACK


def lone(board: BoardSpec, square: str, kind: Kind) -> set[str]:
    occ = {board.index(board.parse_square(square)): Piece(W, kind)}
    return {board.square(sq).name for sq in attacked_squares(geometry(board), occ, W)}


def position(text: str) -> WholePosition:
    pos = decode(text)
    assert isinstance(pos, WholePosition)
    return pos


def test_rook_attacks_planar_and_cylinder():
    assert len(lone(BoardSpec(), "a1", Kind.ROOK)) == 14
    assert len(lone(BoardSpec(8, 8, Topology.CYLINDER), "a1", Kind.ROOK)) == 14


def test_bishop_crosses_cylinder_seam():
    planar = lone(BoardSpec(), "c1", Kind.BISHOP)
    cylinder = lone(BoardSpec(8, 8, Topology.CYLINDER), "c1", Kind.BISHOP)
    assert "h4" not in planar
    assert {"b2", "a3", "h4", "g5", "f6", "e7", "d8"} <= cylinder
    assert "c1" not in cylinder


def test_king_on_torus_has_eight_neighbours():
    assert lone(BoardSpec(4, 4, Topology.TORUS), "a1", Kind.KING) == {"b1", "d1", "a2", "a4", "b2", "d2", "b4", "d4"}


def test_rays_stop_at_their_origin_on_a_torus():
    board = BoardSpec(4, 4, Topology.TORUS)
    targets = lone(board, "a1", Kind.QUEEN)
    assert "a1" not in targets
    assert len(targets) == 15


def test_bare_king_moves():
    moves = legal_moves(position("W:Ke1 | B:Ke8 | wtm | board=8x8,planar"))
    assert sorted(m.to_square.name for m in moves) == ["d1", "d2", "e2", "f1", "f2"]


def test_stalemate_has_no_moves():
    pos = position("W:Kc7,Qb6 | B:Ka8 | btm | board=8x8,planar")
    assert legal_moves(pos) == []
    assert is_stalemate(pos)
    assert not is_checkmate(pos)


def test_checkmate_detected():
    pos = position("W:Kf6,Qg7 | B:Kh8 | btm | board=8x8,planar")
    assert is_checkmate(pos)


def test_promotion_fan_out():
    pos = position("W:Ka1,Pe7 | B:Ke4 | wtm | board=8x8,planar")
    promotions = sorted(m.text for m in legal_moves(pos) if m.from_square.name == "e7")
    assert promotions == ["e7e8b", "e7e8n", "e7e8q", "e7e8r"]


def test_apply_move_capture_and_promotion():
    pos = position("W:Ka1,Pe7 | B:Kh5,Rd8 | wtm | board=8x8,planar")
    board = pos.board
    child = apply(pos, Move.parse("e7d8q", board))
    assert child.to_move is B
    assert len(child.placements) == len(pos.placements) - 1
    assert board.parse_square("e7") not in dict(child.placements)
    assert dict(child.placements)[board.parse_square("d8")] == Piece(W, Kind.QUEEN)
    assert move_label(pos, Move.parse("e7d8q", board)) == "exd8=Q"
    with pytest.raises(IllegalMove):
        apply(pos, Move.parse("a1a3", board))


def test_move_text():
    board = BoardSpec()
    assert Move.parse("e2e4", board).text == "e2e4"
    assert Move.parse("e7e8q", board).promotion is Kind.QUEEN
    assert str(Move.parse("g6g7", board)) == "g6g7"


def test_attacks_mirror_symmetry():
    board = BoardSpec()
    rng = np.random.default_rng(5)
    for _ in range(200):
        white = random_half((Kind.KING, Kind.QUEEN, Kind.KNIGHT), W, board, rng)
        black = random_half((Kind.KING, Kind.BISHOP), B, board, rng)
        if not superposable(white, black):
            continue
        pos = superpose(white, black)
        mirrored = [(sq._replace(file=7 - sq.file), piece) for sq, piece in pos.placements]
        expected = {sq._replace(file=7 - sq.file) for sq in attacks(pos, W)}
        assert attacks(WholePosition(board, tuple(mirrored)), W) == expected


def test_attacks_torus_translation_invariance():
    board = BoardSpec(5, 5, Topology.TORUS)
    rng = np.random.default_rng(6)
    for _ in range(200):
        white = random_half((Kind.KING, Kind.ROOK, Kind.BISHOP), W, board, rng)
        black = random_half((Kind.KING, Kind.KNIGHT), B, board, rng)
        if not superposable(white, black):
            continue
        pos = superpose(white, black)

        def shift(sq):
            return sq._replace(file=(sq.file + 2) % 5, rank=(sq.rank + 1) % 5)

        moved = WholePosition(board, tuple((shift(sq), piece) for sq, piece in pos.placements))
        assert attacks(moved, W) == {shift(sq) for sq in attacks(pos, W)}
        assert attacks(moved, B) == {shift(sq) for sq in attacks(pos, B)}


def test_apply_always_yields_legal_positions():
    board = BoardSpec(5, 5, Topology.CYLINDER)
    rng = np.random.default_rng(8)
    applied = 0
    for _ in range(300):
        white = random_half((Kind.KING, Kind.QUEEN, Kind.PAWN), W, board, rng)
        black = random_half((Kind.KING, Kind.ROOK, Kind.PAWN), B, board, rng)
        try:
            pos = superpose(white, black)
        except SuperpositionError:
            continue
        for move in legal_moves(pos):
            child = apply(pos, move)
            assert child.to_move is B
            applied += 1
    assert applied > 0


def to_python_chess(pos: WholePosition) -> chess.Board:
    reference = chess.Board(None)
    for sq, piece in pos.placements:
        symbol = piece.kind.value if piece.color is W else piece.kind.value.lower()
        reference.set_piece_at(chess.square(sq.file, sq.rank), chess.Piece.from_symbol(symbol))
    reference.turn = pos.to_move is W
    reference.castling_rights = chess.BB_EMPTY
    reference.ep_square = None
    return reference


def reference_moves(pos: WholePosition) -> set[str]:
    reference = to_python_chess(pos)
    moves = set()
    for move in reference.legal_moves:
        # superposed positions have no history, so pawns only step one rank
        if reference.piece_type_at(move.from_square) == chess.PAWN and abs(move.to_square - move.from_square) == 16:
            continue
        moves.add(move.uci())
    return moves


@pytest.mark.parametrize("to_move", [W, B])
def test_legal_moves_match_python_chess(to_move: Color):
    board = BoardSpec()
    rng = np.random.default_rng(100 + int(to_move))
    compared = 0
    while compared < 2000:
        white = random_half((Kind.KING, Kind.QUEEN, Kind.KNIGHT, Kind.PAWN), W, board, rng)
        black = random_half((Kind.KING, Kind.ROOK, Kind.PAWN), B, board, rng)
        try:
            pos = WholePosition(board, white.placements + black.placements, to_move)
        except SuperpositionError:
            continue
        assert {m.text for m in legal_moves(pos)} == reference_moves(pos)
        compared += 1
