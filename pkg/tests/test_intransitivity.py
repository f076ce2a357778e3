from __future__ import annotations

import numpy as np
import pytest

from itlb.board import BoardSpec, Color, HalfPosition, Kind, WholePosition, decode, encode, enumerate_halves, superposable
from itlb.errors import BudgetExceeded, ChainInvariantViolation, InvariantViolation, ParseError
from itlb.intransitivity import (
    MC_CSV_COLUMNS,
    Chain,
    ChainKind,
    Direction,
    Relation,
    SearchCursor,
    beats,
    chain_length_study,
    classify_chain,
    exhaustive_search,
    first_cycle,
    monte_carlo,
    oriented,
    parse_certificate,
    potential_feasibility,
    slot_materials,
    verify_certificate,
    wilson_interval,
)
from itlb.solver import Solver
from itlb.tables import Outcome

W, B = Color.WHITE, Color.BLACK
K, R = Kind.KING, Kind.ROOK
TINY = BoardSpec(3, 3)
SMALL = BoardSpec(5, 5)
ROOK_VS_KING = [(K, R), (K,)]

A, BB, C, D = "W:Ka1", "B:Kh8", "W:Kc1", "B:Kf8"


def half(text: str) -> HalfPosition:
    value = decode(text)
    assert isinstance(value, HalfPosition)
    return value


class FakeEvaluator:
    """Outcomes looked up by (White half, Black half); everything else is a draw."""

    def __init__(self, outcomes: dict[tuple[str, str], Color]):
        self.outcomes = outcomes
        self.calls = 0

    def solve(self, pos: WholePosition) -> Outcome:
        self.calls += 1
        winner = self.outcomes.get((encode(pos.half(W)), encode(pos.half(B))))
        return Outcome.draw() if winner is None else Outcome.win(winner, 1)

    def table(self, material, board):
        return None


FORWARD = FakeEvaluator({(A, BB): W, (C, BB): B, (C, D): W, (A, D): B})
REVERSE = FakeEvaluator({(A, BB): B, (C, BB): W, (C, D): B, (A, D): W})


@pytest.fixture
def chain() -> Chain:
    return Chain(tuple(half(text) for text in (A, BB, C, D)))



def test_forward_cycle(chain: Chain):
    result = classify_chain(chain, FORWARD)
    assert result.kind is ChainKind.INTRANSITIVE
    assert result.certificate.direction is Direction.FORWARD
    assert result.certificate.oriented_edges() == [(0, 1), (1, 2), (2, 3), (3, 0)]
    assert potential_feasibility(oriented(result, chain)).witness == (0, 1, 2, 3)


def test_reverse_cycle(chain: Chain):
    result = classify_chain(chain, REVERSE)
    assert result.kind is ChainKind.INTRANSITIVE
    assert result.certificate.direction is Direction.REVERSE
    assert result.certificate.oriented_edges() == [(1, 0), (2, 1), (3, 2), (0, 3)]


def test_transitive_chain(chain: Chain):
    white_always = FakeEvaluator({(A, BB): W, (C, BB): W, (C, D): W, (A, D): W})
    result = classify_chain(chain, white_always)
    assert result.kind is ChainKind.TRANSITIVE_DECISIVE
    assert result.certificate is None
    feasibility = potential_feasibility(oriented(result, chain))
    assert feasibility.feasible
    for winner, loser in oriented(result, chain):
        assert feasibility.assignment[winner] > feasibility.assignment[loser]


def test_one_draw_makes_the_chain_degenerate(chain: Chain):
    result = classify_chain(chain, FakeEvaluator({(A, BB): W, (C, BB): B, (C, D): W}))
    assert result.kind is ChainKind.DRAW_DEGENERATE
    assert [e.outcome.verdict.value for e in result.edges][-1] == "Draw"


def test_certificate_text_round_trip(chain: Chain):
    certificate = classify_chain(chain, FORWARD).certificate
    text = certificate.to_text()
    assert text.splitlines()[0] == "itlb-certificate v1"
    assert "edge 3 0 BlackWins dtm=1" in text
    assert parse_certificate(text) == certificate
    assert parse_certificate("# found by hand\n" + text) == certificate


def test_certificate_parse_errors(chain: Chain):
    text = classify_chain(chain, FORWARD).certificate.to_text()
    with pytest.raises(ParseError):
        parse_certificate(text.replace("itlb-certificate v1", "certificate"))
    with pytest.raises(ParseError):
        parse_certificate(text.replace("BlackWins dtm=1", "Wins"))
    with pytest.raises(ParseError):
        parse_certificate(text.replace("direction forward\n", ""))
    with pytest.raises(ChainInvariantViolation):
        parse_certificate(text.replace("direction forward", "direction reverse"))


def test_verify_certificate(chain: Chain):
    certificate = classify_chain(chain, FORWARD).certificate
    assert all(check.ok for check in verify_certificate(certificate, FORWARD))
    checks = verify_certificate(certificate, FakeEvaluator({(A, BB): W, (C, BB): B, (C, D): W}))
    assert [check.ok for check in checks] == [True, True, True, False]
    assert checks[-1].recomputed == Outcome.draw()


def read_fixture() -> str:
    with open("./tests/test_files/cycle_kq_8x8.cert", encoding="utf-8") as f:
        return f.read()


def test_certificate_fixture_parses():
    certificate = parse_certificate(read_fixture())
    assert certificate.direction is Direction.REVERSE
    assert all(member.board == BoardSpec() for member in certificate.chain.members)
    assert [encode(m) for m in certificate.chain.members] == ["W:Kb1,Qh4", "B:Kb3,Qg2", "W:Kh2,Qa7", "B:Kf3,Qc2"]
    assert [e.outcome for e in certificate.edges] == [
        Outcome.win(B, 8),
        Outcome.win(W, 15),
        Outcome.win(B, 4),
        Outcome.win(W, 11),
    ]
    assert not potential_feasibility(certificate.oriented_edges()).feasible


@pytest.mark.slow
def test_verify_real_certificate_fixture(solver: Solver):
    certificate = parse_certificate(read_fixture())
    assert all(check.ok for check in verify_certificate(certificate, solver))
    result = classify_chain(certificate.chain, solver)
    assert result.kind is ChainKind.INTRANSITIVE
    assert result.certificate == certificate
    feasibility = potential_feasibility(oriented(result, certificate.chain))
    assert not feasibility.feasible
    assert len(feasibility.witness) == 4


def test_certificate_member_indices(chain: Chain):
    text = classify_chain(chain, FORWARD).certificate.to_text()
    with pytest.raises(ParseError):
        parse_certificate(text.replace("member 2 W:Kc1", "member 4 W:Kc1"))
    with pytest.raises(ParseError):
        parse_certificate(text.replace("member 2 W:Kc1", "member 1 W:Kc1"))

def test_potential_feasibility():
    feasibility = potential_feasibility([("A", "B"), ("B", "C"), ("C", "D")])
    assert feasibility.assignment == {"A": 3, "B": 2, "C": 1, "D": 0}
    assert str(feasibility) == "Feasible(A=3, B=2, C=1, D=0)"

    cycle = potential_feasibility([("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")])
    assert not cycle.feasible
    assert cycle.witness == ("A", "B", "C", "D")
    assert str(cycle) == "Infeasible(A > B > C > D > A)"

    assert potential_feasibility([]).assignment == {}
    assert potential_feasibility([], nodes=["x"]).assignment == {"x": 0}


def test_chain_invariants():
    with pytest.raises(ChainInvariantViolation):
        Chain((half(A), half(BB)))
    with pytest.raises(ChainInvariantViolation):
        Chain((half(A), half(BB), half(C), half(D), half("W:Kd4")))
    with pytest.raises(ChainInvariantViolation):
        Chain((half(BB), half(A), half(D), half(C)))
    with pytest.raises(ChainInvariantViolation):
        # Kb2 is next to Ka1
        Chain((half(A), half("B:Kb2"), half(C), half(D)))
    with pytest.raises(ChainInvariantViolation):
        Chain((half(A), half(BB), decode("W:Ka1", BoardSpec(4, 4)), half(D)))


def test_chain_edges(chain: Chain):
    assert len(chain) == 4
    assert chain.edges == [(0, 1), (1, 2), (2, 3), (3, 0)]
    assert chain.superposition(1, 2).to_move is W
    assert encode(chain.superposition(1, 2)) == "W:Kc1 | B:Kh8 | wtm | board=8x8,planar"


def test_beats(solver: Solver):
    board = BoardSpec(5, 5)
    white = decode("W:Kc3,Qd3", board)
    black = decode("B:Ke5", board)
    assert beats(white, black, solver) is Relation.X_BEATS
    assert beats(black, white, solver) is Relation.Y_BEATS
    assert beats(decode("W:Ka1", board), black, solver) is Relation.NEITHER
    with pytest.raises(InvariantViolation):
        beats(white, decode("W:Ka1", board), solver)


def test_beats_is_antisymmetric(solver: Solver):
    board = BoardSpec(4, 4)
    whites = list(enumerate_halves((K, R), W, board))[::5]
    blacks = list(enumerate_halves((K,), B, board))
    swapped = {Relation.X_BEATS: Relation.Y_BEATS, Relation.Y_BEATS: Relation.X_BEATS, Relation.NEITHER: Relation.NEITHER}
    seen = set()
    for white in whites:
        for black in blacks:
            if superposable(white, black):
                relation = beats(white, black, solver)
                assert beats(black, white, solver) is swapped[relation]
                seen.add(relation)
    assert Relation.X_BEATS in seen


def test_wilson_interval():
    low, high = wilson_interval(50, 100)
    assert low == pytest.approx(0.4038, abs=1e-4)
    assert high == pytest.approx(0.5962, abs=1e-4)
    assert wilson_interval(0, 10)[0] == pytest.approx(0.0, abs=1e-12)
    assert wilson_interval(10, 10)[1] == pytest.approx(1.0)
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_wilson_width_shrinks_with_root_n():
    small = wilson_interval(500, 1000)
    large = wilson_interval(50_000, 100_000)
    assert (small[1] - small[0]) / (large[1] - large[0]) == pytest.approx(10, rel=0.01)
    assert small[0] < 0.5 < small[1]


def test_first_cycle():
    eye = np.eye(2, dtype=bool)
    assert first_cycle([eye] * 4) == (0, 0, 0, 0)
    assert first_cycle([np.zeros((2, 2), dtype=bool)] + [eye] * 3) is None
    only_second = np.array([[False, False], [False, True]])
    assert first_cycle([only_second, eye, eye, eye]) == (1, 1, 1, 1)
    # rectangular steps: 2 whites, 3 blacks
    forward = np.array([[False, False, True], [True, False, False]])
    back = np.array([[False, False], [False, False], [False, True]])
    assert first_cycle([forward, back, forward, back]) is None
    back[2, 0] = True
    assert first_cycle([forward, back, forward, back]) == (0, 2, 0, 2)


def test_slot_materials():
    assert slot_materials([(K, R), (K,)], 6) == ((K, R), (K,)) * 3
    assert slot_materials([(K,)], 4) == ((K,),) * 4
    with pytest.raises(ChainInvariantViolation):
        slot_materials([(K,)], 5)
    with pytest.raises(ChainInvariantViolation):
        slot_materials([(K,), (K,), (K,), (K,)], 6)


def test_monte_carlo_kings_only_are_draws(solver: Solver):
    report = monte_carlo(BoardSpec(5, 5), [(K,)], samples=30, seed=1, solver=solver)
    assert report.draw_degenerate == 30
    assert report.intransitive == report.transitive_decisive == 0
    assert report.first_certificate is None
    assert report.interval[0] == pytest.approx(0.0, abs=1e-12)
    assert len(report.csv_row()) == len(MC_CSV_COLUMNS)


def test_monte_carlo_rejects_bad_arguments(solver: Solver):
    with pytest.raises(ValueError):
        monte_carlo(TINY, [(K,)], samples=0, solver=solver)
    with pytest.raises(ValueError):
        monte_carlo(TINY, [(K,)], samples=1, seed=-1, solver=solver)
    report = monte_carlo(TINY, [(K,)], samples=1, solver=solver)
    assert report.samples == 1
    assert report.intransitive + report.transitive_decisive + report.draw_degenerate == 1


def test_monte_carlo_is_reproducible(solver: Solver):
    first = monte_carlo(SMALL, ROOK_VS_KING, samples=40, seed=7, solver=solver)
    second = monte_carlo(SMALL, ROOK_VS_KING, samples=40, seed=7, solver=solver)
    assert first == second
    assert first.intransitive + first.transitive_decisive + first.draw_degenerate == 40
    assert first.rejected_illegal > 0


def test_monte_carlo_ignores_worker_count(solver: Solver):
    single = monte_carlo(SMALL, ROOK_VS_KING, samples=40, seed=3, workers=1, solver=solver)
    parallel = monte_carlo(SMALL, ROOK_VS_KING, samples=40, seed=3, workers=2, solver=solver)
    assert single.to_dict() == parallel.to_dict()
    if single.first_certificate is not None:
        assert single.first_certificate == parallel.first_certificate


def test_chain_length_study(solver: Solver):
    reports = chain_length_study(SMALL, ROOK_VS_KING, lengths=(4, 6), samples=10, seed=2, solver=solver)
    assert [r.chain_length for r in reports] == [4, 6]
    assert all(r.samples == 10 for r in reports)


def test_exhaustive_kings_only_has_no_cycle(solver: Solver):
    result = exhaustive_search(TINY, [(K,)], solver=solver)
    assert result.certificate is None
    assert result.exhausted
    assert result.nodes == 9 * 9


def test_exhaustive_finds_the_first_cycle():
    result = exhaustive_search(BoardSpec(), [(K,)], solver=FORWARD)
    assert result.nodes == 64 * 64
    certificate = result.certificate
    # read backwards, A D C B is a reverse cycle and sorts first
    assert certificate.direction is Direction.REVERSE
    assert [encode(m) for m in certificate.chain.members] == [A, D, C, BB]


def test_exhaustive_is_deterministic(solver: Solver):
    first = exhaustive_search(TINY, [(K, R)], solver=solver)
    second = exhaustive_search(TINY, [(K, R)], solver=solver)
    assert first == second
    assert first.nodes == 72 * 72
    if first.certificate is not None:
        assert all(check.ok for check in verify_certificate(first.certificate, solver))


def test_exhaustive_budget_and_resume(solver: Solver, tmp_path):
    full = exhaustive_search(TINY, [(K, R)], solver=solver)
    with pytest.raises(BudgetExceeded) as e:
        exhaustive_search(TINY, [(K, R)], solver=solver, budget_nodes=720)
    cursor = e.value.cursor
    assert (cursor.row, cursor.nodes) == (10, 720)

    path = tmp_path / "cursor.npz"
    cursor.save(path)
    loaded = SearchCursor.load(path)
    assert loaded.slots == ((K, R),) * 4
    assert np.array_equal(loaded.matrices[0], cursor.matrices[0])

    resumed = exhaustive_search(TINY, [(K, R)], solver=solver, resume=loaded)
    assert resumed == full
    with pytest.raises(ValueError):
        exhaustive_search(BoardSpec(4, 4), [(K, R)], solver=solver, resume=SearchCursor.load(path))


def test_exhaustive_budget_counts_this_call_only(solver: Solver):
    with pytest.raises(BudgetExceeded) as e:
        exhaustive_search(TINY, [(K, R)], solver=solver, budget_nodes=720)
    with pytest.raises(BudgetExceeded) as again:
        exhaustive_search(TINY, [(K, R)], solver=solver, budget_nodes=720, resume=e.value.cursor)
    assert (again.value.cursor.row, again.value.cursor.nodes) == (20, 1440)
    # a budget below one row still advances by a row
    with pytest.raises(BudgetExceeded) as tiny:
        exhaustive_search(TINY, [(K, R)], solver=solver, budget_nodes=10, resume=again.value.cursor)
    assert (tiny.value.cursor.row, tiny.value.cursor.nodes) == (21, 1512)


@pytest.mark.slow
@pytest.mark.parametrize("material", ["KR", "KQ"])
def test_exhaustive_four_by_four(solver: Solver, material: str):
    kinds = tuple(Kind(c) for c in material)
    result = exhaustive_search(BoardSpec(4, 4), [kinds], solver=solver)
    assert result.exhausted
    assert result.nodes == 240 * 240
    if result.certificate is not None:
        assert all(check.ok for check in verify_certificate(result.certificate, solver))
