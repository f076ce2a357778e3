from __future__ import annotations

import numpy as np
import pytest

from itlb.board import BoardSpec, Kind, Piece, WholePosition, decode, geometry
from itlb.errors import ResourceLimit, TableMismatch, TooManyPieces
from itlb.movegen import apply, legal_moves
from itlb.solver import BYTES_PER_SLOT, ForwardOracle, Solver, build_table, enumerate_positions, mate_search, memory_estimate
from itlb.tables import MaterialSignature, Outcome, Verdict, slot_index

SMALL = BoardSpec(5, 5)


def position(text: str) -> WholePosition:
    pos = decode(text)
    assert isinstance(pos, WholePosition)
    return pos



def check_bellman(solver: Solver, material: MaterialSignature, board: BoardSpec) -> int:
    table = solver.table(material, board)
    checked = 0
    for pos in enumerate_positions(material, board):
        outcome = table.probe(pos)
        children = [solver.solve(apply(pos, move)) for move in legal_moves(pos)]
        if outcome.verdict is Verdict.DRAW:
            assert not children or all(c.winner is not pos.to_move for c in children)
            assert any(c.verdict is Verdict.DRAW for c in children) or not children
            continue
        d = outcome.dtm
        if d == 0:
            assert not children
        elif outcome.winner is pos.to_move:
            wins = [c.dtm for c in children if c.winner is pos.to_move]
            assert min(wins) == d - 1
        else:
            assert all(c.winner is outcome.winner for c in children)
            assert max(c.dtm for c in children) == d - 1
        checked += 1
    return checked


def test_bare_kings_draw(solver: Solver):
    assert solver.solve(position("W:Ke1 | B:Ke8 | wtm | board=8x8,planar")) == Outcome.draw()
    table = solver.table(MaterialSignature.parse("KvK"), BoardSpec())
    assert table.summary()["legal"] == table.summary()["draws"] > 0


def test_queen_mate_in_one(solver: Solver):
    pos = position("W:Kc3,Qd3 | B:Ke5 | wtm | board=5x5,planar")
    assert solver.solve(pos) == Outcome(Verdict.WHITE_WINS, 1)
    assert solver.line_text(pos).endswith("#")
    assert len(solver.principal_line(pos)) == 1


def test_checkmated_side_to_move_has_dtm_zero(solver: Solver):
    pos = position("W:Kc3,Qd4 | B:Ke5 | btm | board=5x5,planar")
    assert solver.solve(pos) == Outcome(Verdict.WHITE_WINS, 0)


def test_stalemate_is_draw(solver: Solver):
    # Black Ka5 boxed in by Kc4 and Qb3, not in check
    pos = position("W:Kc4,Qb3 | B:Ka5 | btm | board=5x5,planar")
    assert legal_moves(pos) == []
    assert solver.solve(pos) == Outcome.draw()


def test_lone_knight_never_wins(solver: Solver):
    for code in ("KNvK", "KvKN"):
        summary = solver.table(MaterialSignature.parse(code), SMALL).summary()
        assert summary["white_wins"] == summary["black_wins"] == 0
        assert summary["draws"] == summary["legal"]


def test_principal_line_counts_down(solver: Solver):
    table = solver.table(MaterialSignature.parse("KRvK"), SMALL)
    rng = np.random.default_rng(3)
    positions = enumerate_positions(table.material, SMALL)
    for index in rng.choice(len(positions), size=30, replace=False):
        pos = positions[int(index)]
        outcome = solver.solve(pos)
        line = solver.principal_line(pos)
        assert len(line) == (outcome.dtm or 0)
        for step, (_, child) in enumerate(line, start=1):
            assert solver.solve(child).dtm == outcome.dtm - step


@pytest.mark.parametrize("code", ["KQvK", "KRvK", "KvKR", "KBvK"])
def test_bellman_consistency_small(solver: Solver, code: str):
    assert check_bellman(solver, MaterialSignature.parse(code), BoardSpec(4, 4)) >= 0


def test_bellman_consistency_kqk_5x5(solver: Solver):
    assert check_bellman(solver, MaterialSignature.parse("KQvK"), SMALL) > 0


@pytest.mark.slow
def test_bellman_consistency_kqk_8x8(solver: Solver):
    assert check_bellman(solver, MaterialSignature.parse("KQvK"), BoardSpec()) > 0
    pos = position("W:Kf6,Qg6 | B:Kh8 | wtm | board=8x8,planar")
    assert solver.solve(pos) == Outcome(Verdict.WHITE_WINS, 1)
    assert solver.line_text(pos) == "Qg7#"


@pytest.mark.parametrize("code", ["KvK", "KQvK", "KRvK", "KBvK", "KNvK", "KvKQ", "KvKR", "KvKB", "KvKN"])
def test_forward_oracle_agrees_on_4x4(solver: Solver, code: str):
    board = BoardSpec(4, 4)
    material = MaterialSignature.parse(code)
    positions = enumerate_positions(material, board)
    expected = [solver.solve(pos) for pos in positions]
    assert ForwardOracle().solve_many(positions) == expected


def test_forward_oracle_agrees_on_random_four_piece_positions(solver: Solver):
    board = BoardSpec(4, 4)
    material = MaterialSignature.parse("KRvKN")
    positions = enumerate_positions(material, board)
    rng = np.random.default_rng(12)
    sample = [positions[int(i)] for i in rng.choice(len(positions), size=150, replace=False)]
    assert ForwardOracle().solve_many(sample) == [solver.solve(pos) for pos in sample]


def test_mate_search_agrees_on_short_mates(solver: Solver):
    material = MaterialSignature.parse("KQvK")
    checked = 0
    for pos in enumerate_positions(material, BoardSpec(4, 4)):
        outcome = solver.solve(pos)
        if outcome.dtm is not None and outcome.dtm <= 3:
            assert mate_search(pos, outcome.dtm) == outcome
            checked += 1
        if checked >= 40:
            break
    assert checked > 0


def mirrored(pos: WholePosition) -> WholePosition:
    ranks = pos.board.ranks
    placements = tuple(
        (sq._replace(rank=ranks - 1 - sq.rank), Piece(piece.color.other, piece.kind)) for sq, piece in pos.placements
    )
    return WholePosition(pos.board, placements, pos.to_move.other)


def test_color_symmetry(solver: Solver):
    for pos in enumerate_positions(MaterialSignature.parse("KRvK"), SMALL)[::7]:
        outcome = solver.solve(pos)
        flipped = solver.solve(mirrored(pos))
        assert flipped.dtm == outcome.dtm
        assert flipped.winner == (outcome.winner.other if outcome.winner is not None else None)


def test_build_is_independent_of_worker_count(solver: Solver):
    board = SMALL
    material = MaterialSignature.parse("KRvK")
    subtables = {child: solver.table(child, board) for child in material.children(board)}
    single = build_table(material, board, subtables, workers=1)
    parallel = build_table(material, board, subtables, workers=2)
    assert single.packed.tobytes() == parallel.packed.tobytes()
    assert single.overflow == parallel.overflow


def test_pawn_tables_resolve_promotions(solver: Solver):
    board = BoardSpec(4, 4)
    pos = position("W:Ka1,Pc3 | B:Ka4 | wtm | board=4x4,planar")
    assert solver.solve(pos) == ForwardOracle().solve(pos)
    assert check_bellman(solver, MaterialSignature.parse("KPvK"), board) > 0


def test_probe_mismatch(solver: Solver):
    table = solver.table(MaterialSignature.parse("KQvK"), SMALL)
    with pytest.raises(TableMismatch):
        table.probe(position("W:Ka1,Rc3 | B:Ke5 | wtm | board=5x5,planar"))
    with pytest.raises(TableMismatch):
        table.probe(position("W:Ka1,Qc3 | B:Kh8 | wtm | board=8x8,planar"))


def test_probe_equals_solve(solver: Solver):
    material = MaterialSignature.parse("KRvK")
    table = solver.table(material, SMALL)
    for pos in enumerate_positions(material, SMALL)[::11]:
        slot = slot_index(material, SMALL, pos.occupancy, pos.to_move)
        assert table.outcome_at(slot) == table.probe(pos) == solver.solve(pos)


def test_illegal_slots_stay_illegal(solver: Solver):
    material = MaterialSignature.parse("KQvK")
    table = solver.table(material, SMALL)
    legal = len(enumerate_positions(material, SMALL))
    assert table.summary()["legal"] == legal
    # kings on the same square
    assert table.outcome_at(0) is None


def test_too_many_pieces_and_external_oracle():
    pos = position("W:Ka1,Qa3,Rc3 | B:Kh8,Rh6,Ng6 | wtm | board=8x8,planar")
    with pytest.raises(TooManyPieces):
        Solver().solve(pos)
    seen = []

    def oracle(text: str) -> Outcome:
        seen.append(text)
        return Outcome.draw()

    assert Solver(external=oracle).solve(pos) == Outcome.draw()
    assert seen == ["W:Ka1,Qa3,Rc3 | B:Kh8,Rh6,Ng6 | wtm | board=8x8,planar"]


def test_resource_and_missing_subtables():
    kqk = MaterialSignature.parse("KQvK")
    assert memory_estimate(kqk, SMALL) == 25**3 * 2 * BYTES_PER_SLOT
    with pytest.raises(ResourceLimit):
        build_table(kqk, SMALL, max_memory=memory_estimate(kqk, SMALL) - 1)
    with pytest.raises(ResourceLimit):
        Solver(max_memory=1 << 10).table(kqk, SMALL)
    with pytest.raises(ValueError):
        build_table(MaterialSignature.parse("KQvK"), SMALL)
    with pytest.raises(TooManyPieces):
        build_table(MaterialSignature.parse("KQRvKRN"), SMALL)


def test_geometry_is_cached():
    assert geometry(SMALL) is geometry(BoardSpec(5, 5))
    assert Kind.KING.order == 0
