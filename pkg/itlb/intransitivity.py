"""Intransitively winning players' positions.

Half-positions of opposite colors are compared by superposing them (White
always to move) and solving the result: ``x`` beats ``y`` when the solved
superposition is a win for ``x``'s color. A chain of alternating half-positions
is intransitive when every member beats its successor around the cycle (or
every member is beaten by its successor), like rock-paper-scissors.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Hashable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional, Protocol

import networkx as nx
import numpy as np
from scipy import stats

from itlb.board import (
    BoardSpec,
    Color,
    HalfPosition,
    Kind,
    WholePosition,
    check_material,
    decode,
    encode,
    enumerate_halves,
    random_half,
    superposable,
    superpose,
)
from itlb.errors import (
    BudgetExceeded,
    ChainInvariantViolation,
    InvariantViolation,
    ItlbError,
    ParseError,
    ResourceLimit,
)
from itlb.solver import Solver
from itlb.tables import DRAW_CONVENTION, MaterialSignature, Outcome

CERTIFICATE_HEADER = "itlb-certificate v1"
MC_CSV_COLUMNS = (
    "board",
    "materials",
    "chain_length",
    "samples",
    "seed",
    "intransitive",
    "transitive_decisive",
    "draw_degenerate",
    "rejected_illegal",
    "intransitive_share",
    "wilson_low",
    "wilson_high",
)

Material = tuple[Kind, ...]


class Evaluator(Protocol):
    def solve(self, pos: WholePosition) -> Outcome: ...


class Relation(Enum):
    X_BEATS = "XBeats"
    Y_BEATS = "YBeats"
    NEITHER = "Neither"


class ChainKind(Enum):
    INTRANSITIVE = "intransitive"
    TRANSITIVE_DECISIVE = "transitive_decisive"
    DRAW_DEGENERATE = "draw_degenerate"


class Direction(Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


def _white_black(x: HalfPosition, y: HalfPosition) -> tuple[HalfPosition, HalfPosition]:
    return (x, y) if x.color is Color.WHITE else (y, x)


def beats(x: HalfPosition, y: HalfPosition, solver: Evaluator | None = None) -> Relation:
    """Compare opposite-color half-positions on their superposition, White to move."""
    if x.color is y.color:
        raise InvariantViolation("opposite-colors", f"both halves are {x.color.label}")
    outcome = (solver or Solver()).solve(superpose(*_white_black(x, y)))
    if outcome.winner is None:
        return Relation.NEITHER
    return Relation.X_BEATS if outcome.winner is x.color else Relation.Y_BEATS


@dataclass(frozen=True)
class Chain:
    members: tuple[HalfPosition, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        n = len(self.members)
        if n < 4 or n % 2:
            raise ChainInvariantViolation(f"chain length must be even and at least 4, got {n}")
        for i, member in enumerate(self.members):
            expected = Color.WHITE if i % 2 == 0 else Color.BLACK
            if member.color is not expected:
                raise ChainInvariantViolation(f"member {i} must be {expected.label}")
            if member.board != self.members[0].board:
                raise ChainInvariantViolation(f"member {i} lives on {member.board.text}")
        for i, j in self.edges:
            if not superposable(*_white_black(self.members[i], self.members[j])):
                raise ChainInvariantViolation(f"members {i} and {j} cannot be superposed")

    @property
    def board(self) -> BoardSpec:
        return self.members[0].board

    @property
    def edges(self) -> list[tuple[int, int]]:
        n = len(self.members)
        return [(i, (i + 1) % n) for i in range(n)]

    def superposition(self, i: int, j: int) -> WholePosition:
        return superpose(*_white_black(self.members[i], self.members[j]))

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class EdgeResult:
    i: int
    j: int
    outcome: Outcome

    def winner_index(self, chain: Chain) -> int | None:
        winner = self.outcome.winner
        if winner is None:
            return None
        return self.i if chain.members[self.i].color is winner else self.j


@dataclass(frozen=True)
class CycleCertificate:
    chain: Chain
    edges: tuple[EdgeResult, ...]
    direction: Direction

    def __post_init__(self):
        if [(e.i, e.j) for e in self.edges] != self.chain.edges:
            raise ChainInvariantViolation("certificate edges do not follow the chain")
        for edge in self.edges:
            preferred = edge.i if self.direction is Direction.FORWARD else edge.j
            if edge.winner_index(self.chain) != preferred:
                raise ChainInvariantViolation(f"edge {edge.i}-{edge.j} is not won in the {self.direction.value} direction")

    def oriented_edges(self) -> list[tuple[int, int]]:
        """(winner, loser) member indices of every edge."""
        return [(e.i, e.j) if self.direction is Direction.FORWARD else (e.j, e.i) for e in self.edges]

    def to_text(self) -> str:
        lines = [
            CERTIFICATE_HEADER,
            f"board {self.chain.board.text}",
            f"direction {self.direction.value}",
            f"convention {DRAW_CONVENTION}",
        ]
        lines += [f"member {i} {encode(member)}" for i, member in enumerate(self.chain.members)]
        lines += [f"edge {e.i} {e.j} {e.outcome.text}" for e in self.edges]
        return "\n".join(lines) + "\n"


def parse_certificate(text: str) -> CycleCertificate:
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    if not lines or lines[0] != CERTIFICATE_HEADER:
        raise ParseError(f"certificate must start with {CERTIFICATE_HEADER!r}")
    board = None
    direction = None
    members: dict[int, str] = {}
    edges = []
    for number, line in enumerate(lines[1:], start=2):
        word, _, rest = line.partition(" ")
        try:
            if word == "board":
                board = BoardSpec.parse(rest)
            elif word == "direction":
                direction = Direction(rest.strip())
            elif word == "member":
                index, _, half = rest.partition(" ")
                if int(index) in members:
                    raise ParseError(f"member {int(index)} appears twice", number)
                members[int(index)] = half
            elif word == "edge":
                i, j, outcome = rest.split(" ", 2)
                edges.append(EdgeResult(int(i), int(j), Outcome.parse(outcome)))
            elif word != "convention":
                raise ParseError(f"unknown certificate line {word!r}", number)
        except ItlbError:
            raise
        except ValueError as e:
            raise ParseError(f"line {number}: {e}", number)
    if board is None or direction is None:
        raise ParseError("certificate lacks board or direction")
    if sorted(members) != list(range(len(members))):
        raise ParseError(f"member indices must run 0..{len(members) - 1}, got {sorted(members)}")
    halves = []
    for i in range(len(members)):
        half = decode(members[i], board)
        if not isinstance(half, HalfPosition):
            raise ParseError(f"member {i} is not a half-position")
        halves.append(half)
    return CycleCertificate(Chain(tuple(halves)), tuple(edges), direction)


@dataclass(frozen=True)
class Classification:
    kind: ChainKind
    edges: tuple[EdgeResult, ...]
    certificate: CycleCertificate | None = None


def classify_chain(chain: Chain, solver: Evaluator | None = None) -> Classification:
    solver = solver or Solver()
    edges = tuple(EdgeResult(i, j, solver.solve(chain.superposition(i, j))) for i, j in chain.edges)
    winners = [edge.winner_index(chain) for edge in edges]
    if any(w is None for w in winners):
        return Classification(ChainKind.DRAW_DEGENERATE, edges)
    for direction in Direction:
        preferred = [e.i if direction is Direction.FORWARD else e.j for e in edges]
        if winners == preferred:
            return Classification(ChainKind.INTRANSITIVE, edges, CycleCertificate(chain, edges, direction))
    return Classification(ChainKind.TRANSITIVE_DECISIVE, edges)


def oriented(classification: Classification, chain: Chain) -> list[tuple[int, int]]:
    """(winner, loser) pairs of the decisive edges of a classified chain."""
    pairs = []
    for edge in classification.edges:
        winner = edge.winner_index(chain)
        if winner is not None:
            pairs.append((winner, edge.j if winner == edge.i else edge.i))
    return pairs


@dataclass(frozen=True)
class EdgeCheck:
    edge: EdgeResult
    recomputed: Outcome

    @property
    def ok(self) -> bool:
        return self.edge.outcome == self.recomputed


def verify_certificate(certificate: CycleCertificate, solver: Evaluator | None = None) -> list[EdgeCheck]:
    """Re-solve every edge of a certificate independently of how it was found."""
    solver = solver or Solver()
    chain = certificate.chain
    return [EdgeCheck(edge, solver.solve(chain.superposition(edge.i, edge.j))) for edge in certificate.edges]


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    assignment: Optional[dict[Hashable, int]] = None
    witness: Optional[tuple[Hashable, ...]] = None

    def __str__(self) -> str:
        if self.feasible:
            return "Feasible(" + ", ".join(f"{node}={value}" for node, value in (self.assignment or {}).items()) + ")"
        cycle = [*map(str, self.witness or ()), str((self.witness or ("",))[0])]
        return "Infeasible(" + " > ".join(cycle) + ")"


def potential_feasibility(
    edges: Iterable[tuple[Hashable, Hashable]], nodes: Iterable[Hashable] = ()
) -> Feasibility:
    """Real values consistent with strict preferences ``u > v`` exist iff the preference digraph is acyclic."""
    graph = nx.DiGraph()
    graph.add_nodes_from(nodes)
    graph.add_edges_from(edges)
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        assignment: dict[Hashable, int] = {}
        for node in reversed(list(nx.topological_sort(graph))):
            assignment[node] = max((assignment[s] + 1 for s in graph.successors(node)), default=0)
        return Feasibility(True, {node: assignment[node] for node in graph.nodes})
    return Feasibility(False, witness=tuple(u for u, _ in cycle))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    z = float(stats.norm.ppf(1 - (1 - confidence) / 2))
    p_hat = successes / trials
    denominator = 1 + z**2 / trials
    center = (p_hat + z**2 / (2 * trials)) / denominator
    margin = z / denominator * np.sqrt(p_hat * (1 - p_hat) / trials + z**2 / (4 * trials**2))
    return (max(0.0, float(center - margin)), min(1.0, float(center + margin)))


def slot_materials(materials: Sequence[Material], chain_length: int) -> tuple[Material, ...]:
    """Per-slot materials, repeating the given list when it divides the chain length."""
    if chain_length < 4 or chain_length % 2:
        raise ChainInvariantViolation(f"chain length must be even and at least 4, got {chain_length}")
    if not materials or chain_length % len(materials):
        raise ChainInvariantViolation(f"{len(materials)} slot materials cannot fill a chain of {chain_length}")
    return tuple(tuple(materials[i % len(materials)]) for i in range(chain_length))


def _material_text(slots: Sequence[Material]) -> str:
    return ",".join("".join(k.value for k in m) for m in slots)


def _edge_signatures(slots: Sequence[Material]) -> list[MaterialSignature]:
    n = len(slots)
    signatures = []
    for i in range(n):
        white, black = (slots[i], slots[(i + 1) % n]) if i % 2 == 0 else (slots[(i + 1) % n], slots[i])
        signatures.append(MaterialSignature.from_kinds(white, black))
    return list(dict.fromkeys(signatures))


@dataclass(frozen=True)
class McReport:
    board: BoardSpec
    materials: tuple[Material, ...]
    chain_length: int
    samples: int
    seed: int
    intransitive: int
    transitive_decisive: int
    draw_degenerate: int
    rejected_illegal: int
    first_certificate: Optional[CycleCertificate] = field(default=None, compare=False)

    @property
    def share(self) -> float:
        return self.intransitive / self.samples

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.intransitive, self.samples)

    def to_dict(self) -> dict[str, Any]:
        low, high = self.interval
        return {
            "board": self.board.text,
            "materials": _material_text(self.materials),
            "chain_length": self.chain_length,
            "samples": self.samples,
            "seed": self.seed,
            "intransitive": self.intransitive,
            "transitive_decisive": self.transitive_decisive,
            "draw_degenerate": self.draw_degenerate,
            "rejected_illegal": self.rejected_illegal,
            "intransitive_share": self.share,
            "wilson_low": low,
            "wilson_high": high,
        }

    def csv_row(self) -> list[Any]:
        data = self.to_dict()
        return [data[column] for column in MC_CSV_COLUMNS]


@dataclass
class _McPartial:
    counts: dict[ChainKind, int]
    rejected: int
    first_index: int | None = None
    first_certificate: CycleCertificate | None = None


def sample_chain(
    board: BoardSpec, slots: Sequence[Material], seed: int, index: int, max_rejections: int = 10_000
) -> tuple[Chain, int]:
    """Chain number ``index`` of a seeded run; its RNG substream depends on (seed, index) only."""
    rng = np.random.default_rng([seed, index])
    colors = [Color.WHITE if j % 2 == 0 else Color.BLACK for j in range(len(slots))]
    rejected = 0
    while True:
        members = tuple(random_half(material, color, board, rng) for material, color in zip(slots, colors))
        n = len(members)
        if all(superposable(*_white_black(members[i], members[(i + 1) % n])) for i in range(n)):
            return Chain(members), rejected
        rejected += 1
        if rejected > max_rejections:
            raise ResourceLimit(f"sample {index}: more than {max_rejections} illegal chains in a row")


def _run_samples(
    board: BoardSpec,
    slots: tuple[Material, ...],
    seed: int,
    start: int,
    stop: int,
    max_rejections: int,
    solver: Evaluator,
    progress_callback: Callable[[int, int], None] | None = None,
) -> _McPartial:
    partial = _McPartial({kind: 0 for kind in ChainKind}, 0)
    for index in range(start, stop):
        chain, rejected = sample_chain(board, slots, seed, index, max_rejections)
        partial.rejected += rejected
        result = classify_chain(chain, solver)
        partial.counts[result.kind] += 1
        if result.certificate is not None and partial.first_index is None:
            partial.first_index = index
            partial.first_certificate = result.certificate
        if progress_callback and (index - start) % 100 == 0:
            progress_callback(index - start, stop - start)
    return partial


_MC_SOLVER: Solver | None = None


def _init_mc_worker(tables: dict) -> None:
    global _MC_SOLVER
    _MC_SOLVER = Solver()
    _MC_SOLVER.preload(tables)


def _run_samples_in_worker(job: tuple[BoardSpec, tuple[Material, ...], int, int, int, int]) -> _McPartial:
    assert _MC_SOLVER is not None
    return _run_samples(*job, solver=_MC_SOLVER)


def monte_carlo(
    board: BoardSpec,
    materials: Sequence[Material],
    chain_length: int = 4,
    samples: int = 1000,
    seed: int = 0,
    workers: int = 1,
    solver: Solver | None = None,
    max_rejections: int = 10_000,
    progress_callback: Callable[[int, int], None] | None = None,
) -> McReport:
    """Classify ``samples`` random chains; the counts depend on the seed only, never on ``workers``."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    slots = slot_materials(materials, chain_length)
    for j, material in enumerate(slots):
        check_material(material, board)
    solver = solver or Solver()
    for signature in _edge_signatures(slots):
        solver.table(signature, board)
    logging.info(f"Monte-Carlo: {samples} chains of {chain_length} on {board.text}, slots {_material_text(slots)}")

    if workers <= 1:
        partials = [_run_samples(board, slots, seed, 0, samples, max_rejections, solver, progress_callback)]
    else:
        step = -(-samples // (workers * 4))
        jobs = [(board, slots, seed, start, min(start + step, samples), max_rejections) for start in range(0, samples, step)]
        partials = []
        with ProcessPoolExecutor(workers, initializer=_init_mc_worker, initargs=(solver.tables,)) as pool:
            for done, partial in enumerate(pool.map(_run_samples_in_worker, jobs), start=1):
                partials.append(partial)
                if progress_callback:
                    progress_callback(min(done * step, samples), samples)
    if progress_callback:
        progress_callback(samples, samples)

    counts = {kind: sum(p.counts[kind] for p in partials) for kind in ChainKind}
    found = [p for p in partials if p.first_index is not None]
    first = min(found, key=lambda p: p.first_index).first_certificate if found else None
    report = McReport(
        board=board,
        materials=slots,
        chain_length=chain_length,
        samples=samples,
        seed=seed,
        intransitive=counts[ChainKind.INTRANSITIVE],
        transitive_decisive=counts[ChainKind.TRANSITIVE_DECISIVE],
        draw_degenerate=counts[ChainKind.DRAW_DEGENERATE],
        rejected_illegal=sum(p.rejected for p in partials),
        first_certificate=first,
    )
    logging.info(f"Monte-Carlo done: {report.to_dict()}")
    return report


def chain_length_study(
    board: BoardSpec,
    materials: Sequence[Material],
    lengths: Sequence[int] = (4, 6, 8),
    samples: int = 1000,
    seed: int = 0,
    workers: int = 1,
    solver: Solver | None = None,
    max_rejections: int = 10_000,
    progress_callback: Callable[[int, int], None] | None = None,
) -> list[McReport]:
    """One report per chain length with fixed material and seed."""
    solver = solver or Solver()
    return [
        monte_carlo(board, materials, n, samples, seed, workers, solver, max_rejections, progress_callback)
        for n in lengths
    ]


@dataclass
class SearchCursor:
    """Resumable state of an exhaustive search: finished and partial outcome matrices."""

    board: BoardSpec
    slots: tuple[Material, ...]
    pair_index: int = 0
    row: int = 0
    nodes: int = 0
    matrices: list[np.ndarray] = field(default_factory=list)

    def save(self, path: str | os.PathLike[str]) -> None:
        meta = {
            "board": self.board.text,
            "slots": _material_text(self.slots),
            "pair_index": self.pair_index,
            "row": self.row,
            "nodes": self.nodes,
        }
        with open(path, "wb") as f:
            np.savez(f, meta=np.array(json.dumps(meta)), **{f"m{i}": m for i, m in enumerate(self.matrices)})

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> SearchCursor:
        with np.load(Path(path)) as data:
            meta = json.loads(str(data["meta"]))
            matrices = [data[f"m{i}"] for i in range(len(data.files) - 1)]
        slots = tuple(tuple(Kind(c) for c in m) for m in meta["slots"].split(","))
        return cls(BoardSpec.parse(meta["board"]), slots, meta["pair_index"], meta["row"], meta["nodes"], matrices)


@dataclass(frozen=True)
class SearchResult:
    certificate: CycleCertificate | None
    exhausted: bool
    nodes: int


def _bool_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(np.int64) @ b.astype(np.int64)) > 0


def first_cycle(steps: Sequence[np.ndarray]) -> tuple[int, ...] | None:
    """Lexicographically first closed walk through boolean step matrices slot 0 -> 1 -> ... -> 0."""
    n = len(steps)
    suffix: list[np.ndarray] = [steps[-1]] * n
    for j in range(n - 2, -1, -1):
        suffix[j] = _bool_matmul(steps[j], suffix[j + 1])
    starts = np.flatnonzero(np.diagonal(suffix[0]))
    if not starts.size:
        return None
    first = int(starts[0])
    picks = [first]
    for j in range(1, n):
        candidates = np.flatnonzero(steps[j - 1][picks[-1]] & suffix[j][:, first])
        picks.append(int(candidates[0]))
    return tuple(picks)


def _code(outcome: Outcome) -> int:
    return {Color.WHITE: 1, Color.BLACK: -1, None: 0}[outcome.winner]


def exhaustive_search(
    board: BoardSpec,
    materials: Sequence[Material],
    chain_length: int = 4,
    solver: Solver | None = None,
    budget_nodes: int | None = None,
    resume: SearchCursor | None = None,
    progress_callback: Callable[[int, int], None] | None = None,
) -> SearchResult:
    """Enumerate every chain of the slot materials; return the first certificate or prove there is none.

    A node is one superposition evaluated. ``budget_nodes`` counts the nodes of
    this call only (a resumed search gets a fresh budget) and every call
    finishes at least one row. When it runs out the search raises
    :class:`BudgetExceeded` carrying a cursor to resume from.
    """
    slots = slot_materials(materials, chain_length)
    solver = solver or Solver()
    n = len(slots)
    colors = [Color.WHITE if j % 2 == 0 else Color.BLACK for j in range(n)]
    halves: dict[tuple[Material, Color], list[HalfPosition]] = {}
    for material, color in zip(slots, colors):
        if (material, color) not in halves:
            halves[(material, color)] = list(enumerate_halves(material, color, board))
    pairs: list[tuple[Material, Material]] = []
    edge_pair = []
    for i in range(n):
        white, black = (slots[i], slots[(i + 1) % n]) if i % 2 == 0 else (slots[(i + 1) % n], slots[i])
        if (white, black) not in pairs:
            pairs.append((white, black))
        edge_pair.append(pairs.index((white, black)))

    if resume is not None:
        if resume.board != board or resume.slots != slots:
            raise ValueError("resume cursor belongs to a different search")
        cursor = resume
    else:
        cursor = SearchCursor(board, slots)
    start_nodes = cursor.nodes
    total_rows = sum(len(halves[(w, Color.WHITE)]) for w, _ in pairs)
    done_rows = sum(len(halves[(w, Color.WHITE)]) for w, _ in pairs[: cursor.pair_index]) + cursor.row

    while cursor.pair_index < len(pairs):
        white_material, black_material = pairs[cursor.pair_index]
        whites = halves[(white_material, Color.WHITE)]
        blacks = halves[(black_material, Color.BLACK)]
        solver.table(MaterialSignature.from_kinds(white_material, black_material), board)
        if len(cursor.matrices) <= cursor.pair_index:
            cursor.matrices.append(np.zeros((len(whites), len(blacks)), dtype=np.int8))
        matrix = cursor.matrices[cursor.pair_index]
        while cursor.row < len(whites):
            spent = cursor.nodes - start_nodes
            if budget_nodes is not None and spent and spent + len(blacks) > budget_nodes:
                raise BudgetExceeded(f"node budget {budget_nodes} exhausted after {cursor.nodes} nodes", cursor)
            white = whites[cursor.row]
            for b, black in enumerate(blacks):
                if superposable(white, black):
                    matrix[cursor.row, b] = _code(solver.solve(superpose(white, black)))
            cursor.nodes += len(blacks)
            cursor.row += 1
            done_rows += 1
            if progress_callback and done_rows % 64 == 0:
                progress_callback(done_rows, total_rows)
        cursor.pair_index += 1
        cursor.row = 0

    found: list[tuple[tuple[int, ...], Direction]] = []
    for direction in Direction:
        steps = []
        for i in range(n):
            matrix = cursor.matrices[edge_pair[i]]
            # member i beats member i+1 (forward) or is beaten by it (reverse)
            white_wins = 1 if direction is Direction.FORWARD else -1
            steps.append(matrix == white_wins if i % 2 == 0 else (matrix == -white_wins).T)
        picks = first_cycle(steps)
        if picks is not None:
            found.append((picks, direction))
    logging.info(f"Exhaustive search on {board.text} ({_material_text(slots)}): {cursor.nodes} nodes")
    if not found:
        return SearchResult(None, True, cursor.nodes)
    picks, direction = min(found, key=lambda item: (item[0], list(Direction).index(item[1])))
    chain = Chain(tuple(halves[(slots[j], colors[j])][p] for j, p in enumerate(picks)))
    classification = classify_chain(chain, solver)
    if classification.certificate is None or classification.certificate.direction is not direction:
        raise ChainInvariantViolation("search matrices disagree with the solver")
    return SearchResult(classification.certificate, True, cursor.nodes)
