"""Exact values of small-material positions.

Tables are built by retrograde analysis: a forward scan over chunks of slots
counts every legal slot's in-table successors (non-capturing, non-promoting
moves) and resolves the other successors against already solved sub-tables;
then wins and losses are propagated backwards level by level, the parents of
each level being generated by un-moves, so that the winner's dtm is the
shortest mate and the loser's dtm is the longest resistance. Whatever is left
unresolved is a draw. There is no 50-move rule and no repetition counter.

Two independent oracles cross-check the builder: :class:`ForwardOracle`
explores the reachable graph and iterates values forwards to a fixpoint, and
:func:`mate_search` is a depth-limited negamax with path-set loop detection.
"""

from __future__ import annotations

import logging
import os
from array import array
from collections.abc import Iterable, Iterator, Mapping
from concurrent.futures import ProcessPoolExecutor
from typing import Protocol

import numpy as np

from itlb.batch import UNREACHED, ScanChunk, SubTables, predecessors, scan
from itlb.board import BoardSpec, Color, Kind, Piece, WholePosition, encode, geometry
from itlb.config import DEFAULT_MAX_MEMORY
from itlb.errors import IllegalPosition, ResourceLimit, TooManyPieces
from itlb.movegen import Move, apply, generate, in_check, legal_moves, make, move_label, square_attacked
from itlb.tablefile import load_cached, save_table
from itlb.tablefile import cache_path as table_cache_path
from itlb.tables import (
    CODE_BLACK_WINS,
    CODE_DRAW,
    CODE_ILLEGAL,
    CODE_WHITE_WINS,
    DTM_CAP,
    MAX_PIECES,
    MaterialSignature,
    Outcome,
    SolvedTable,
    slot_count,
)

# working arrays of the builder, per slot: scan results, state, dtm, flags, packed output
BYTES_PER_SLOT = 20
SCAN_CHUNK = 1 << 16
FRONTIER_CHUNK = 1 << 17
STATE_UNKNOWN, STATE_WIN, STATE_LOSS = 0, 1, 2


class ExternalOracle(Protocol):
    """Adapter contract for tablebases beyond the native limit: encoded WholePosition text in, Outcome out."""

    def __call__(self, position_text: str) -> Outcome: ...


def memory_estimate(material: MaterialSignature, board: BoardSpec, subtables: Iterable[SolvedTable] = ()) -> int:
    """Bytes the builder holds at its peak: its own working arrays plus the sub-tables it reads."""
    return slot_count(material, board) * BYTES_PER_SLOT + sum(table.packed.nbytes for table in subtables)


_WORKER_SUBTABLES: dict[tuple[Piece, ...], SolvedTable] = {}


def _init_worker(subtables: dict[tuple[Piece, ...], SolvedTable]) -> None:
    global _WORKER_SUBTABLES
    _WORKER_SUBTABLES = subtables


def _scan_in_worker(job: tuple[MaterialSignature, BoardSpec, int, int]) -> tuple[int, ScanChunk]:
    return job[2], scan(*job, _WORKER_SUBTABLES)


def _scan_all(material: MaterialSignature, board: BoardSpec, subtables: SubTables, workers: int) -> ScanChunk:
    rests = slot_count(material, board) // 2
    jobs = [(material, board, start, min(start + SCAN_CHUNK, rests)) for start in range(0, rests, SCAN_CHUNK)]
    result = ScanChunk.empty(2 * rests)

    def place(start: int, chunk: ScanChunk) -> None:
        at = slice(2 * start, 2 * start + chunk.legal.shape[0])
        for name in ScanChunk.__dataclass_fields__:
            getattr(result, name)[at] = getattr(chunk, name)

    if workers <= 1:
        for job in jobs:
            place(job[2], scan(*job, subtables))
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(dict(subtables),)) as pool:
            for start, chunk in pool.map(_scan_in_worker, jobs):
                place(start, chunk)
    return result


def _chunks(slots: np.ndarray) -> Iterator[np.ndarray]:
    for start in range(0, slots.shape[0], FRONTIER_CHUNK):
        yield slots[start : start + FRONTIER_CHUNK]


def _propagate(material: MaterialSignature, board: BoardSpec, scanned: ScanChunk, label: str) -> tuple[np.ndarray, np.ndarray]:
    count = scanned.legal.shape[0]
    state = np.zeros(count, dtype=np.int8)
    dtm = np.zeros(count, dtype=np.int16)
    counter = scanned.counter
    has_win = scanned.ext_win != UNREACHED
    # every move leaves the table and loses
    waiting = scanned.legal & (counter == 0) & ~has_win & (scanned.ext_loss > 0)
    horizon = max(int(scanned.ext_win[has_win].max(initial=0)), int(scanned.ext_loss.max(initial=0)))

    losses = np.flatnonzero(scanned.mated)
    state[losses] = STATE_LOSS
    wins = np.zeros(0, dtype=np.int64)
    level = 1
    while True:
        new_wins = [np.flatnonzero((scanned.ext_win == level) & (state == STATE_UNKNOWN))]
        state[new_wins[0]] = STATE_WIN
        for frontier in _chunks(losses):
            parents = np.unique(predecessors(material, board, frontier, scanned.legal))
            parents = parents[state[parents] == STATE_UNKNOWN]
            state[parents] = STATE_WIN
            new_wins.append(parents)

        new_losses = [np.flatnonzero(waiting & (scanned.ext_loss == level) & (state == STATE_UNKNOWN))]
        state[new_losses[0]] = STATE_LOSS
        for frontier in _chunks(wins):
            parents, hits = np.unique(predecessors(material, board, frontier, scanned.legal), return_counts=True)
            counter[parents] -= hits.astype(counter.dtype)
            fresh = parents[(counter[parents] == 0) & (state[parents] == STATE_UNKNOWN) & ~has_win[parents]]
            later = scanned.ext_loss[fresh] > level
            waiting[fresh[later]] = True
            state[fresh[~later]] = STATE_LOSS
            new_losses.append(fresh[~later])

        wins, losses = np.concatenate(new_wins), np.concatenate(new_losses)
        dtm[wins] = level
        dtm[losses] = level
        if wins.size or losses.size:
            logging.debug(f"{label}: level {level}: {wins.size} wins, {losses.size} losses")
        elif level >= horizon:
            break
        level += 1
    return state, dtm


def _pack(legal: np.ndarray, state: np.ndarray, dtm: np.ndarray) -> tuple[np.ndarray, dict[int, int]]:
    codes = np.where(legal, CODE_DRAW, CODE_ILLEGAL).astype(np.uint8)
    for stm in Color:
        view = codes[int(stm) :: 2]
        winner, loser = (CODE_WHITE_WINS, CODE_BLACK_WINS) if stm is Color.WHITE else (CODE_BLACK_WINS, CODE_WHITE_WINS)
        view[state[int(stm) :: 2] == STATE_WIN] = winner
        view[state[int(stm) :: 2] == STATE_LOSS] = loser
    decisive = state != STATE_UNKNOWN
    packed = codes << 6
    packed[decisive] |= np.minimum(dtm[decisive], DTM_CAP).astype(np.uint8)
    overflow = {int(slot): int(dtm[slot]) for slot in np.flatnonzero(decisive & (dtm >= DTM_CAP))}
    return packed, overflow


def build_table(
    material: MaterialSignature,
    board: BoardSpec,
    subtables: Mapping[MaterialSignature, SolvedTable] | None = None,
    *,
    workers: int = 1,
    max_memory: int = DEFAULT_MAX_MEMORY,
) -> SolvedTable:
    """Classify every slot of ``material`` on ``board``; every capture/promotion target must be in ``subtables``."""
    if len(material) > MAX_PIECES:
        raise TooManyPieces(f"{material.code} has {len(material)} pieces, native tables stop at {MAX_PIECES}")
    if material.has_pawns and not board.allows_pawns:
        raise IllegalPosition("pawns cannot stand on a torus")
    subtables = subtables or {}
    needed = memory_estimate(material, board, subtables.values())
    if needed > max_memory:
        raise ResourceLimit(f"{material.code} on {board.text} needs about {needed} bytes, ceiling is {max_memory}")
    by_pieces = {m.pieces: t for m, t in subtables.items()}
    missing = [m.code for m in material.children(board) if m.pieces not in by_pieces]
    if missing:
        raise ValueError(f"sub-tables missing for {material.code}: {', '.join(missing)}")

    count = slot_count(material, board)
    label = f"{material.code} on {board.text}"
    logging.info(f"Building {label} ({count} slots, about {needed >> 20} MiB, {workers} worker(s))")
    scanned = _scan_all(material, board, by_pieces, workers)
    state, dtm = _propagate(material, board, scanned, label)
    packed, overflow = _pack(scanned.legal, state, dtm)
    table = SolvedTable(board, material, packed, overflow)
    logging.info(f"Built {label}: {table.summary()}")
    return table


def probe(table: SolvedTable, pos: WholePosition) -> Outcome:
    return table.probe(pos)


class Solver:
    """Table store: memory first, then the cache directory, then a fresh build (sub-tables first)."""

    def __init__(
        self,
        cache_dir: str | os.PathLike[str] | None = None,
        *,
        workers: int = 1,
        max_memory: int = DEFAULT_MAX_MEMORY,
        external: ExternalOracle | None = None,
    ):
        self.cache_dir = cache_dir
        self.workers = workers
        self.max_memory = max_memory
        self.external = external
        self._tables: dict[tuple[BoardSpec, MaterialSignature], SolvedTable] = {}

    @property
    def tables(self) -> dict[tuple[BoardSpec, MaterialSignature], SolvedTable]:
        return dict(self._tables)

    def preload(self, tables: Mapping[tuple[BoardSpec, MaterialSignature], SolvedTable]) -> None:
        self._tables.update(tables)

    def table(self, material: MaterialSignature, board: BoardSpec) -> SolvedTable:
        key = (board, material)
        table = self._tables.get(key)
        if table is not None:
            return table
        if self.cache_dir is not None:
            table = load_cached(self.cache_dir, material, board)
        if table is None:
            subtables = {child: self.table(child, board) for child in material.children(board)}
            table = build_table(material, board, subtables, workers=self.workers, max_memory=self.max_memory)
            if self.cache_dir is not None:
                path = table_cache_path(self.cache_dir, material, board)
                save_table(table, path)
                logging.info(f"Cached {material.code} on {board.text} at {path}")
        self._tables[key] = table
        return table

    def solve(self, pos: WholePosition) -> Outcome:
        material = MaterialSignature.of(pos.material)
        if len(material) > MAX_PIECES:
            if self.external is not None:
                return self.external(encode(pos))
            raise TooManyPieces(f"{material.code} has {len(material)} pieces, native tables stop at {MAX_PIECES}")
        return self.table(material, pos.board).probe(pos)

    def principal_line(self, pos: WholePosition, max_plies: int = 256) -> list[tuple[Move, WholePosition]]:
        """One optimal line: the winner shortens the mate, the loser resists longest."""
        line: list[tuple[Move, WholePosition]] = []
        outcome = self.solve(pos)
        while outcome.dtm is not None and outcome.dtm > 0 and len(line) < max_plies:
            best: tuple[Move, WholePosition] | None = None
            for move in legal_moves(pos):
                child = apply(pos, move)
                value = self.solve(child)
                if value.winner is outcome.winner and value.dtm == outcome.dtm - 1:
                    best = (move, child)
                    break
            if best is None:
                raise IllegalPosition(f"table inconsistency at {encode(pos)}")
            line.append(best)
            pos, outcome = best[1], self.solve(best[1])
        return line

    def line_text(self, pos: WholePosition) -> str:
        labels = []
        for move, child in self.principal_line(pos):
            label = move_label(pos, move)
            geo = geometry(child.board)
            if in_check(geo, child.occupancy, child.to_move):
                label += "#" if not generate(geo, child.occupancy, child.to_move) else "+"
            labels.append(label)
            pos = child
        return " ".join(labels)


def solve(pos: WholePosition, solver: Solver | None = None) -> Outcome:
    return (solver or Solver()).solve(pos)


Key = tuple[tuple[tuple[int, Piece], ...], Color]


def _key(occ: Mapping[int, Piece], to_move: Color) -> Key:
    return (tuple(sorted(occ.items())), to_move)


class ForwardOracle:
    """Values by forward exploration and a level-synchronous fixpoint, sharing one graph across queries.

    Every reachable position is interned once; its successors are kept as an
    array of node numbers, so the graph of a whole 3-piece 8x8 table fits.
    """

    def __init__(self, max_nodes: int = 2_000_000):
        self.max_nodes = max_nodes

    def solve_many(self, positions: Iterable[WholePosition]) -> list[Outcome]:
        positions = list(positions)
        if not positions:
            return []
        board = positions[0].board
        geo = geometry(board)
        ids: dict[Key, int] = {}
        keys: list[Key] = []
        kids: list[array | None] = []
        status = bytearray()
        dtm = array("i")
        stack: list[int] = []

        def intern(key: Key) -> int:
            node = ids.get(key)
            if node is None:
                if len(keys) >= self.max_nodes:
                    raise ResourceLimit(f"forward oracle exceeded {self.max_nodes} nodes")
                node = ids[key] = len(keys)
                keys.append(key)
                kids.append(None)
                status.append(STATE_UNKNOWN)
                dtm.append(0)
                stack.append(node)
            return node

        roots = [intern(_key(pos.occupancy, pos.to_move)) for pos in positions]
        while stack:
            node = stack.pop()
            occ, stm = dict(keys[node][0]), keys[node][1]
            moves = generate(geo, occ, stm)
            if not moves:
                if in_check(geo, occ, stm):
                    status[node] = STATE_LOSS
                continue
            kids[node] = array("i", [intern(_key(make(occ, move), stm.other)) for move in moves])

        unresolved = [node for node, children in enumerate(kids) if children]
        level = 1
        while unresolved:
            wins, losses, rest = [], [], []
            for node in unresolved:
                children = kids[node]
                if any(status[kid] == STATE_LOSS for kid in children):
                    wins.append(node)
                elif all(status[kid] == STATE_WIN for kid in children):
                    losses.append(node)
                else:
                    rest.append(node)
            if not wins and not losses:
                break
            for found, verdict in ((wins, STATE_WIN), (losses, STATE_LOSS)):
                for node in found:
                    status[node] = verdict
                    dtm[node] = level
            unresolved = rest
            level += 1

        outcomes = []
        for node in roots:
            stm = keys[node][1]
            if status[node] == STATE_UNKNOWN:
                outcomes.append(Outcome.draw())
            else:
                outcomes.append(Outcome.win(stm if status[node] == STATE_WIN else stm.other, dtm[node]))
        return outcomes

    def solve(self, pos: WholePosition) -> Outcome:
        return self.solve_many([pos])[0]


def mate_search(pos: WholePosition, max_plies: int) -> Outcome | None:
    """Iterative-deepening negamax; the first depth at which either side is forced to be mated is the dtm."""
    geo = geometry(pos.board)

    def wins_within(occ: dict[int, Piece], stm: Color, depth: int, path: set[Key]) -> bool:
        if depth < 1:
            return False
        key = _key(occ, stm)
        if key in path:
            return False
        path.add(key)
        try:
            return any(loses_within(make(occ, move), stm.other, depth - 1, path) for move in generate(geo, occ, stm))
        finally:
            path.discard(key)

    def loses_within(occ: dict[int, Piece], stm: Color, depth: int, path: set[Key]) -> bool:
        moves = generate(geo, occ, stm)
        if not moves:
            return in_check(geo, occ, stm)
        if depth < 2:
            return False
        key = _key(occ, stm)
        if key in path:
            return False
        path.add(key)
        try:
            return all(wins_within(make(occ, move), stm.other, depth - 1, path) for move in moves)
        finally:
            path.discard(key)

    occ = dict(pos.occupancy)
    for depth in range(max_plies + 1):
        if wins_within(occ, pos.to_move, depth, set()):
            return Outcome.win(pos.to_move, depth)
        if loses_within(occ, pos.to_move, depth, set()):
            return Outcome.win(pos.to_move.other, depth)
    return None


def enumerate_positions(material: MaterialSignature, board: BoardSpec) -> list[WholePosition]:
    """Every legal position of ``material`` once (identical pieces in ascending square order), slot order."""
    geo = geometry(board)
    n = board.size
    pieces = material.pieces
    positions = []
    for slot in range(slot_count(material, board)):
        stm = Color(slot & 1)
        rest = slot >> 1
        squares = []
        for _ in pieces:
            rest, sq = divmod(rest, n)
            squares.append(sq)
        squares.reverse()
        if len(set(squares)) != len(squares):
            continue
        if any(pieces[i] == pieces[i + 1] and squares[i] > squares[i + 1] for i in range(len(pieces) - 1)):
            continue
        if any(p.kind is Kind.PAWN and not board.pawn_rank_ok(sq // board.files) for p, sq in zip(pieces, squares)):
            continue
        occ = dict(zip(squares, pieces))
        kings = {p.color: sq for sq, p in occ.items() if p.kind is Kind.KING}
        if kings[Color.BLACK] in geo.king[kings[Color.WHITE]]:
            continue
        if square_attacked(geo, occ, kings[stm.other], stm):
            continue
        positions.append(WholePosition.from_occupancy(board, occ, stm))
    return positions
