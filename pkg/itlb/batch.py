"""Chunked move kernels for the table builders.

A chunk is a contiguous range of square-tuple indices ("rests"); every kernel
decodes it into one square array per piece and works on whole columns at once.
Occupancy is a uint64 bitboard per row and slider reachability goes through
precomputed path masks, so one chunk costs a fixed number of numpy passes
however many positions it holds.
"""

from __future__ import annotations

import functools
import itertools
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from itlb.board import PROMOTION_KINDS, BoardSpec, Color, Kind, Piece, geometry
from itlb.errors import IllegalPosition
from itlb.tables import CODE_BLACK_WINS, CODE_DRAW, CODE_ILLEGAL, CODE_WHITE_WINS, DTM_CAP, MaterialSignature, SolvedTable

UNREACHED = np.iinfo(np.int16).max

Squares = list[np.ndarray]
SubTables = Mapping[tuple[Piece, ...], SolvedTable]


@dataclass(frozen=True, eq=False)
class BoardArrays:
    """Square-indexed lookup tables of one board; -1 pads missing targets."""

    bits: np.ndarray
    rank: np.ndarray
    pawn_rank_ok: np.ndarray
    king: np.ndarray
    knight: np.ndarray
    king_adj: np.ndarray
    knight_adj: np.ndarray
    pawn_adj: tuple[np.ndarray, np.ndarray]
    pawn_captures: tuple[np.ndarray, np.ndarray]
    pawn_push: tuple[np.ndarray, np.ndarray]
    pawn_unpush: tuple[np.ndarray, np.ndarray]
    promotion_rank: tuple[int, int]
    rays: Mapping[Kind, np.ndarray]
    paths: Mapping[Kind, np.ndarray]
    path_ok: Mapping[Kind, np.ndarray]


def _padded(rows: Sequence[Sequence[int]], width: int | None = None) -> np.ndarray:
    width = max([len(row) for row in rows] + [1]) if width is None else width
    out = np.full((len(rows), width), -1, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, : len(row)] = sorted(row)
    return out


def _adjacency(rows: Sequence[Sequence[int]]) -> np.ndarray:
    adj = np.zeros((len(rows), len(rows)), dtype=bool)
    for sq, row in enumerate(rows):
        adj[sq, list(row)] = True
    return adj


def _rank(rank: int | None) -> int:
    return -1 if rank is None else rank


@functools.lru_cache(maxsize=None)
def board_arrays(board: BoardSpec) -> BoardArrays:
    geo = geometry(board)
    n = board.size
    rank = np.arange(n, dtype=np.int64) // board.files
    rays: dict[Kind, np.ndarray] = {}
    paths: dict[Kind, np.ndarray] = {}
    path_ok: dict[Kind, np.ndarray] = {}
    for kind, per_square in geo.rays.items():
        length = max(len(ray) for sq_rays in per_square for ray in sq_rays) or 1
        grid = np.full((n, len(per_square[0]), length), -1, dtype=np.int64)
        for sq, sq_rays in enumerate(per_square):
            for d, ray in enumerate(sq_rays):
                grid[sq, d, : len(ray)] = ray
        rays[kind] = grid
        width = max(len(options) for table in geo.between[kind] for options in table.values())
        mask = np.zeros((n, n, width), dtype=np.uint64)
        ok = np.zeros((n, n, width), dtype=bool)
        for origin, table in enumerate(geo.between[kind]):
            for target, options in table.items():
                for p, path in enumerate(options):
                    mask[origin, target, p] = sum(1 << sq for sq in path)
                    ok[origin, target, p] = True
        paths[kind] = mask
        path_ok[kind] = ok
    pawn_push = []
    pawn_unpush = []
    for color in Color:
        push = np.array([-1 if t is None else t for t in geo.pawn_push[color]], dtype=np.int64)
        unpush = np.full(n, -1, dtype=np.int64)
        for origin, target in enumerate(push):
            if target >= 0 and board.pawn_rank_ok(origin // board.files):
                unpush[target] = origin
        pawn_push.append(push)
        pawn_unpush.append(unpush)
    return BoardArrays(
        bits=np.array([1 << sq for sq in range(n)], dtype=np.uint64),
        rank=rank,
        pawn_rank_ok=(rank > 0) & (rank < board.ranks - 1),
        king=_padded(geo.king),
        knight=_padded(geo.knight),
        king_adj=_adjacency(geo.king),
        knight_adj=_adjacency(geo.knight),
        pawn_adj=(_adjacency(geo.pawn_captures[0]), _adjacency(geo.pawn_captures[1])),
        pawn_captures=(_padded(geo.pawn_captures[0], 2), _padded(geo.pawn_captures[1], 2)),
        pawn_push=(pawn_push[0], pawn_push[1]),
        pawn_unpush=(pawn_unpush[0], pawn_unpush[1]),
        promotion_rank=(_rank(board.promotion_rank(Color.WHITE)), _rank(board.promotion_rank(Color.BLACK))),
        rays=rays,
        paths=paths,
        path_ok=path_ok,
    )


def decode(rests: np.ndarray, k: int, n: int) -> Squares:
    """Square of every piece, in material order, for each square-tuple index."""
    squares = []
    for _ in range(k):
        rests, sq = np.divmod(rests, n)
        squares.append(sq)
    return squares[::-1]


def index_of(squares: Squares, n: int) -> np.ndarray:
    index = np.zeros(squares[0].shape, dtype=np.int64)
    for sq in squares:
        index = index * n + sq
    return index


def occupancy(arrays: BoardArrays, squares: Squares) -> np.ndarray:
    occ = np.zeros(squares[0].shape, dtype=np.uint64)
    for sq in squares:
        occ |= arrays.bits[sq]
    return occ


def attacked(
    arrays: BoardArrays,
    pieces: Sequence[Piece],
    squares: Squares,
    occ: np.ndarray,
    target: np.ndarray,
    by: Color,
    alive: Sequence[np.ndarray | None] | None = None,
) -> np.ndarray:
    """Rows whose ``target`` square is attacked by ``by``; ``alive`` masks captured pieces out."""
    hit = np.zeros(target.shape, dtype=bool)
    for i, (piece, sq) in enumerate(zip(pieces, squares)):
        if piece.color is not by:
            continue
        kind = piece.kind
        if kind is Kind.KING:
            reach = arrays.king_adj[sq, target]
        elif kind is Kind.KNIGHT:
            reach = arrays.knight_adj[sq, target]
        elif kind is Kind.PAWN:
            reach = arrays.pawn_adj[by][sq, target]
        else:
            clear = (arrays.paths[kind][sq, target] & occ[:, None]) == 0
            reach = (clear & arrays.path_ok[kind][sq, target]).any(axis=1)
        if alive is not None and alive[i] is not None:
            reach &= alive[i]
        hit |= reach
    return hit


def _steps(arrays: BoardArrays, kind: Kind, origin: np.ndarray, occ: np.ndarray, blocked: np.ndarray) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """(square, usable) columns of a King, Knight or slider standing on ``origin``; ``blocked`` squares are never usable."""
    if kind is Kind.KING or kind is Kind.KNIGHT:
        table = (arrays.king if kind is Kind.KING else arrays.knight)[origin]
        for j in range(table.shape[1]):
            t = table[:, j]
            yield t, (t >= 0) & ((blocked & arrays.bits[t]) == 0)
        return
    grid = arrays.rays[kind][origin]
    seen = np.zeros(origin.shape, dtype=np.uint64)
    for d in range(grid.shape[1]):
        open_ = np.ones(origin.shape, dtype=bool)
        for step in range(grid.shape[2]):
            t = grid[:, d, step]
            open_ &= t >= 0
            if not open_.any():
                break
            bit = arrays.bits[t]
            usable = open_ & ((blocked & bit) == 0) & ((seen & bit) == 0)
            seen |= np.where(usable, bit, np.uint64(0))
            yield t, usable
            open_ &= (occ & bit) == 0


def targets(arrays: BoardArrays, piece: Piece, origin: np.ndarray, occ: np.ndarray, own: np.ndarray) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Pseudo-move target columns of ``piece``, each (origin, target) pair once."""
    if piece.kind is not Kind.PAWN:
        yield from _steps(arrays, piece.kind, origin, occ, own)
        return
    push = arrays.pawn_push[piece.color][origin]
    yield push, (push >= 0) & ((occ & arrays.bits[push]) == 0)
    captures = arrays.pawn_captures[piece.color][origin]
    for j in range(captures.shape[1]):
        t = captures[:, j]
        yield t, (t >= 0) & ((occ & ~own & arrays.bits[t]) != 0)


def sources(arrays: BoardArrays, piece: Piece, square: np.ndarray, occ: np.ndarray) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Origin columns from which ``piece`` reached ``square`` by a non-capturing, non-promoting move."""
    if piece.kind is not Kind.PAWN:
        yield from _steps(arrays, piece.kind, square, occ, occ)
        return
    origin = arrays.pawn_unpush[piece.color][square]
    yield origin, (origin >= 0) & ((occ & arrays.bits[origin]) == 0)


def table_values(table: SolvedTable, slots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(code, dtm) of many slots of one table at once."""
    packed = table.packed[slots]
    codes = packed >> 6
    dtm = (packed & DTM_CAP).astype(np.int32)
    for at in np.flatnonzero((dtm == DTM_CAP) & (codes >= CODE_WHITE_WINS)):
        dtm[at] = table.overflow[int(slots[at])]
    return codes, dtm


def child_slots(pieces: Sequence[Piece], squares: Squares, n: int, to_move: Color) -> tuple[tuple[Piece, ...], np.ndarray]:
    """Material key and slot of positions given piece by piece; identical pieces take ascending squares."""
    placed = sorted(zip(pieces, squares), key=lambda item: item[0].sort_key)
    columns: Squares = []
    for _, group in itertools.groupby(placed, key=lambda item: item[0]):
        cols = [sq for _, sq in group]
        if len(cols) > 1:
            cols = list(np.sort(np.stack(cols, axis=1), axis=1).T)
        columns.extend(cols)
    return tuple(piece for piece, _ in placed), index_of(columns, n) * 2 + int(to_move)


@dataclass
class SideMoves:
    """Per-row move summary of one side to move."""

    quiet: np.ndarray
    any_move: np.ndarray
    ext_win: np.ndarray
    ext_loss: np.ndarray
    ext_draw: np.ndarray

    @classmethod
    def empty(cls, rows: int) -> SideMoves:
        return cls(
            np.zeros(rows, dtype=np.int16),
            np.zeros(rows, dtype=bool),
            np.full(rows, UNREACHED, dtype=np.int16),
            np.full(rows, -1, dtype=np.int16),
            np.zeros(rows, dtype=np.int16),
        )


def side_moves(
    arrays: BoardArrays,
    n: int,
    pieces: Sequence[Piece],
    squares: Squares,
    occ: np.ndarray,
    stm: Color,
    subtables: SubTables,
    on_quiet: Callable[[np.ndarray, np.ndarray], None] | None = None,
) -> SideMoves:
    """Legal moves of ``stm`` in every row: quiet ones counted (and handed to ``on_quiet`` as
    (row, child slot) columns), captures and promotions resolved against ``subtables``."""
    k = len(pieces)
    rows_total = occ.shape[0]
    out = SideMoves.empty(rows_total)
    own = occupancy(arrays, [sq for piece, sq in zip(pieces, squares) if piece.color is stm])
    king = next(i for i, piece in enumerate(pieces) if piece == Piece(stm, Kind.KING))
    enemies = [j for j, piece in enumerate(pieces) if piece.color is not stm]
    last_rank = arrays.promotion_rank[stm]
    mover_code = CODE_WHITE_WINS if stm is Color.WHITE else CODE_BLACK_WINS

    def resolve(at: np.ndarray, after: Squares, mover: int, victim: int | None, promotion: Kind | None) -> None:
        if not at.size:
            return
        child = []
        for p, piece in enumerate(pieces):
            if p == victim:
                continue
            if p == mover and promotion is not None:
                piece = Piece(piece.color, promotion)
            child.append((piece, after[p]))
        key, slots = child_slots([piece for piece, _ in child], [sq for _, sq in child], n, stm.other)
        table = subtables[key]
        codes, dtm = table_values(table, slots)
        if np.any(codes == CODE_ILLEGAL):
            raise IllegalPosition(f"sub-table {table.material.code} marks a reachable position illegal")
        won = codes == mover_code
        lost = (codes >= CODE_WHITE_WINS) & ~won
        drawn = codes == CODE_DRAW
        out.ext_win[at[won]] = np.minimum(out.ext_win[at[won]], dtm[won] + 1)
        out.ext_loss[at[lost]] = np.maximum(out.ext_loss[at[lost]], dtm[lost] + 1)
        out.ext_draw[at[drawn]] += 1

    for i, piece in enumerate(pieces):
        if piece.color is not stm:
            continue
        pawn = piece.kind is Kind.PAWN
        for target, usable in targets(arrays, piece, squares[i], occ, own):
            rows = np.flatnonzero(usable)
            if not rows.size:
                continue
            t = target[rows]
            after = [sq[rows] for sq in squares]
            origin = after[i]
            after[i] = t
            victims = {j: after[j] == t for j in enemies}
            alive: list[np.ndarray | None] = [None] * k
            captured = np.zeros(rows.size, dtype=bool)
            for j, taken in victims.items():
                alive[j] = ~taken
                captured |= taken
            occ_after = (occ[rows] & ~arrays.bits[origin]) | arrays.bits[t]
            safe = ~attacked(arrays, pieces, after, occ_after, after[king], stm.other, alive)
            out.any_move[rows] |= safe
            promoting = arrays.rank[t] == last_rank if pawn else np.zeros(rows.size, dtype=bool)
            quiet = safe & ~captured & ~promoting
            out.quiet[rows] += quiet
            if on_quiet is not None and quiet.any():
                on_quiet(rows[quiet], index_of([sq[quiet] for sq in after], n) * 2 + int(stm.other))
            for j in [None, *enemies]:
                hit = safe & (~captured if j is None else victims[j])
                if pawn:
                    for kind in PROMOTION_KINDS:
                        resolve(rows[hit & promoting], [sq[hit & promoting] for sq in after], i, j, kind)
                if j is not None:
                    resolve(rows[hit & ~promoting], [sq[hit & ~promoting] for sq in after], i, j, None)
    return out


def legal_rows(arrays: BoardArrays, pieces: Sequence[Piece], squares: Squares) -> np.ndarray:
    """Rows whose squares are distinct, whose pawns stand on inner ranks and whose Kings are apart."""
    king = {piece.color: i for i, piece in enumerate(pieces) if piece.kind is Kind.KING}
    ok = ~arrays.king_adj[squares[king[Color.WHITE]], squares[king[Color.BLACK]]]
    for i, piece in enumerate(pieces):
        for j in range(i + 1, len(pieces)):
            ok &= squares[i] != squares[j]
        if piece.kind is Kind.PAWN:
            ok &= arrays.pawn_rank_ok[squares[i]]
    return ok


@dataclass
class ScanChunk:
    legal: np.ndarray
    mated: np.ndarray
    counter: np.ndarray
    ext_win: np.ndarray
    ext_loss: np.ndarray

    @classmethod
    def empty(cls, slots: int) -> ScanChunk:
        return cls(
            np.zeros(slots, dtype=bool),
            np.zeros(slots, dtype=bool),
            np.zeros(slots, dtype=np.int16),
            np.full(slots, UNREACHED, dtype=np.int16),
            np.full(slots, -1, dtype=np.int16),
        )


def scan(material: MaterialSignature, board: BoardSpec, start: int, stop: int, subtables: SubTables) -> ScanChunk:
    """Legality, quiet-move counters and resolved capture/promotion values of slots ``2*start .. 2*stop``."""
    arrays = board_arrays(board)
    n = board.size
    pieces = material.pieces
    king = {piece.color: i for i, piece in enumerate(pieces) if piece.kind is Kind.KING}
    rests = np.arange(start, stop, dtype=np.int64)
    squares = decode(rests, len(pieces), n)
    base = np.flatnonzero(legal_rows(arrays, pieces, squares))
    chunk = ScanChunk.empty(2 * (stop - start))
    for stm in Color:
        sq = [s[base] for s in squares]
        occ = occupancy(arrays, sq)
        legal = ~attacked(arrays, pieces, sq, occ, sq[king[stm.other]], stm)
        rows = base[legal]
        sq = [s[legal] for s in sq]
        occ = occ[legal]
        at = 2 * rows + int(stm)
        chunk.legal[at] = True
        if len(pieces) == 2 or not rows.size:
            continue
        moves = side_moves(arrays, n, pieces, sq, occ, stm, subtables)
        chunk.counter[at] = moves.quiet + moves.ext_draw
        chunk.ext_win[at] = moves.ext_win
        chunk.ext_loss[at] = moves.ext_loss
        chunk.mated[at] = ~moves.any_move & attacked(arrays, pieces, sq, occ, sq[king[stm]], stm.other)
    return chunk


def predecessors(material: MaterialSignature, board: BoardSpec, slots: np.ndarray, legal: np.ndarray) -> np.ndarray:
    """Parent slot of every in-table move leading into ``slots``, once per (parent, child) move."""
    arrays = board_arrays(board)
    n = board.size
    pieces = material.pieces
    k = len(pieces)
    powers = [n ** (k - 1 - i) for i in range(k)]
    found = [np.zeros(0, dtype=np.int64)]
    for stm in Color:
        rests = slots[(slots & 1) == int(stm)] >> 1
        if not rests.size:
            continue
        mover = stm.other
        squares = decode(rests, k, n)
        occ = occupancy(arrays, squares)
        for i, piece in enumerate(pieces):
            if piece.color is not mover:
                continue
            for origin, usable in sources(arrays, piece, squares[i], occ):
                rows = np.flatnonzero(usable)
                if not rows.size:
                    continue
                parents = (rests[rows] + (origin[rows] - squares[i][rows]) * powers[i]) * 2 + int(mover)
                found.append(parents[legal[parents]])
    return np.concatenate(found)
