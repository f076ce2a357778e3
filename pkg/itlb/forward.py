"""Whole tables by forward iteration, for cross-checking the retrograde builder.

Positions are first reduced to one representative per board symmetry class;
each representative's quiet successors are stored as representative numbers
and the values are then iterated forwards, one dtm level per pass: a position
is won once some successor is a settled loss, lost once every successor is a
settled win. Captures and promotions are resolved against sub-tables solved
the same way. Nothing here generates un-moves or counts remaining moves.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator, MutableMapping

import numpy as np

from itlb.batch import UNREACHED, BoardArrays, attacked, board_arrays, child_slots, decode, legal_rows, occupancy, side_moves
from itlb.board import BoardSpec, Color, Kind, Topology
from itlb.tables import (
    CODE_BLACK_WINS,
    CODE_DRAW,
    CODE_WHITE_WINS,
    DTM_CAP,
    MaterialSignature,
    SolvedTable,
    slot_count,
)

CHUNK = 1 << 16
STATE_UNKNOWN, STATE_WIN, STATE_LOSS = 0, 1, 2

Cache = MutableMapping[tuple[MaterialSignature, BoardSpec], SolvedTable]


def symmetries(board: BoardSpec, pawns: bool) -> list[np.ndarray]:
    """Square permutations that preserve every move: file mirror always, rank mirror and transposition without pawns."""
    files, ranks = board.files, board.ranks
    rank, file = np.divmod(np.arange(board.size, dtype=np.int64), files)
    maps = [(file, rank), (files - 1 - file, rank)]
    if not pawns:
        maps += [(file, ranks - 1 - rank), (files - 1 - file, ranks - 1 - rank)]
        if files == ranks and board.topology is not Topology.CYLINDER:
            maps += [(r, f) for f, r in maps]
    return [r * files + f for f, r in maps]


class ForwardTable:
    def __init__(self, material: MaterialSignature, board: BoardSpec, subtables: Cache):
        self.material = material
        self.board = board
        self.subtables = {m.pieces: subtables[(m, board)] for m in material.children(board)}
        self.arrays: BoardArrays = board_arrays(board)
        self.perms = symmetries(board, material.has_pawns)
        self.states = np.zeros(0, dtype=np.int64)
        self.status = np.zeros(0, dtype=np.int8)
        self.dtm = np.zeros(0, dtype=np.int16)

    def _legal(self, start: int, stop: int) -> Iterator[tuple[Color, list[np.ndarray], np.ndarray]]:
        """(side to move, squares, slots) of the legal slots among rests ``start .. stop``."""
        pieces = self.material.pieces
        king = {piece.color: i for i, piece in enumerate(pieces) if piece.kind is Kind.KING}
        rests = np.arange(start, stop, dtype=np.int64)
        squares = decode(rests, len(pieces), self.board.size)
        base = np.flatnonzero(legal_rows(self.arrays, pieces, squares))
        for stm in Color:
            sq = [s[base] for s in squares]
            ok = ~attacked(self.arrays, pieces, sq, occupancy(self.arrays, sq), sq[king[stm.other]], stm)
            yield stm, [s[ok] for s in sq], rests[base[ok]] * 2 + int(stm)

    def canonical(self, squares: list[np.ndarray], stm: Color) -> np.ndarray:
        best = None
        for perm in self.perms:
            _, slots = child_slots(self.material.pieces, [perm[sq] for sq in squares], self.board.size, stm)
            best = slots if best is None else np.minimum(best, slots)
        return best

    def _state_index(self, squares: list[np.ndarray], stm: Color) -> np.ndarray:
        canon = self.canonical(squares, stm)
        index = np.searchsorted(self.states, canon)
        if np.any(index >= self.states.shape[0]) or np.any(self.states[np.minimum(index, self.states.shape[0] - 1)] != canon):
            raise ValueError(f"{self.material.code}: a successor is not a legal position")
        return index.astype(np.int32)

    def solve(self) -> SolvedTable:
        rests = slot_count(self.material, self.board) // 2
        parts = []
        for start in range(0, rests, CHUNK):
            for stm, squares, slots in self._legal(start, min(start + CHUNK, rests)):
                parts.append(slots[self.canonical(squares, stm) == slots])
        self.states = np.sort(np.concatenate(parts))
        count = self.states.shape[0]
        label = f"{self.material.code} on {self.board.text}"
        logging.info(f"Forward {label}: {count} positions up to symmetry")

        degree = np.zeros(count, dtype=np.int64)
        ext_win = np.full(count, UNREACHED, dtype=np.int16)
        ext_loss = np.full(count, -1, dtype=np.int16)
        ext_draw = np.zeros(count, dtype=bool)
        terminal = np.zeros(count, dtype=bool)
        self.status = np.zeros(count, dtype=np.int8)
        self.dtm = np.zeros(count, dtype=np.int16)
        kid_parts = []
        pieces = self.material.pieces
        n = self.board.size
        for start in range(0, count, CHUNK):
            owners = np.arange(start, min(start + CHUNK, count))
            chunk_owner, chunk_kids = [], []
            for stm in Color:
                mine = owners[(self.states[owners] & 1) == int(stm)]
                if not mine.size:
                    continue
                squares = decode(self.states[mine] >> 1, len(pieces), n)
                occ = occupancy(self.arrays, squares)

                def collect(rows: np.ndarray, child: np.ndarray) -> None:
                    chunk_owner.append(mine[rows])
                    chunk_kids.append(self._state_index(decode(child >> 1, len(pieces), n), stm.other))

                moves = side_moves(self.arrays, n, pieces, squares, occ, stm, self.subtables, on_quiet=collect)
                ext_win[mine] = moves.ext_win
                ext_loss[mine] = moves.ext_loss
                ext_draw[mine] = moves.ext_draw > 0
                terminal[mine] = ~moves.any_move
                king = pieces.index(next(p for p in pieces if p.color is stm and p.kind is Kind.KING))
                mated = ~moves.any_move & attacked(self.arrays, pieces, squares, occ, squares[king], stm.other)
                self.status[mine[mated]] = STATE_LOSS
            if chunk_owner:
                owner = np.concatenate(chunk_owner)
                order = np.argsort(owner, kind="stable")
                kid_parts.append(np.concatenate(chunk_kids)[order])
                degree += np.bincount(owner, minlength=count)
        kids = np.concatenate(kid_parts) if kid_parts else np.zeros(0, dtype=np.int32)
        ptr = np.zeros(count + 1, dtype=np.int64)
        np.cumsum(degree, out=ptr[1:])

        has_win = ext_win != UNREACHED
        horizon = max(int(ext_win[has_win].max(initial=0)), int(ext_loss.max(initial=0)))
        level = 1
        while True:
            unknown = (self.status == STATE_UNKNOWN) & ~terminal
            settled_losses = self._per_state(self.status[kids] == STATE_LOSS, ptr)
            settled_wins = self._per_state(self.status[kids] == STATE_WIN, ptr)
            won = unknown & ((settled_losses > 0) | (ext_win <= level))
            lost = unknown & ~won & ~has_win & ~ext_draw & (settled_wins == degree) & (ext_loss <= level)
            self.status[won] = STATE_WIN
            self.status[lost] = STATE_LOSS
            self.dtm[won | lost] = level
            found = int(np.count_nonzero(won)) + int(np.count_nonzero(lost))
            if found:
                logging.debug(f"Forward {label}: level {level}: {found} positions settled")
            elif level >= horizon:
                break
            level += 1
        return self.table()

    @staticmethod
    def _per_state(flags: np.ndarray, ptr: np.ndarray) -> np.ndarray:
        totals = np.zeros(flags.shape[0] + 1, dtype=np.int32)
        np.cumsum(flags, dtype=np.int32, out=totals[1:])
        return totals[ptr[1:]] - totals[ptr[:-1]]

    def table(self) -> SolvedTable:
        """Expand the representatives' values to every slot of the material."""
        rests = slot_count(self.material, self.board) // 2
        packed = np.zeros(2 * rests, dtype=np.uint8)
        overflow: dict[int, int] = {}
        for start in range(0, rests, CHUNK):
            for stm, squares, slots in self._legal(start, min(start + CHUNK, rests)):
                index = self._state_index(squares, stm)
                status = self.status[index]
                dtm = self.dtm[index].astype(np.int64)
                codes = np.full(slots.shape[0], CODE_DRAW, dtype=np.uint8)
                winner, loser = (CODE_WHITE_WINS, CODE_BLACK_WINS) if stm is Color.WHITE else (CODE_BLACK_WINS, CODE_WHITE_WINS)
                codes[status == STATE_WIN] = winner
                codes[status == STATE_LOSS] = loser
                decisive = status != STATE_UNKNOWN
                packed[slots] = (codes << 6) | np.where(decisive, np.minimum(dtm, DTM_CAP), 0).astype(np.uint8)
                overflow.update((int(s), int(d)) for s, d in zip(slots[decisive & (dtm >= DTM_CAP)], dtm[decisive & (dtm >= DTM_CAP)]))
        return SolvedTable(self.board, self.material, packed, overflow)


def forward_table(material: MaterialSignature, board: BoardSpec, cache: Cache | None = None) -> SolvedTable:
    """Solve ``material`` and, first, every material a capture or promotion leads to."""
    cache = {} if cache is None else cache
    key = (material, board)
    if key not in cache:
        for child in material.children(board):
            forward_table(child, board, cache)
        cache[key] = ForwardTable(material, board, cache).solve()
    return cache[key]
