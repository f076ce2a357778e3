from __future__ import annotations

import logging
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from itlb.board import KIND_ORDER, BoardSpec, Color, Piece, Topology
from itlb.errors import ChecksumMismatch, InvariantViolation, VersionMismatch
from itlb.tables import FORMAT_VERSION, MaterialSignature, SolvedTable, slot_count

#
# ITLB table file, little-endian:
#
#   magic        4s   b"ITLB"
#   version      u16
#   files        u8
#   ranks        u8
#   topology     u8   0 planar, 1 cylinder, 2 torus
#   pieces       u8   number of pieces n
#   piece[n]     u8   color << 3 | kind order (K Q R B N P)
#   count        u64  number of slots
#   slots        count bytes, one packed verdict/dtm byte per slot
#   overflow     u32  number of entries, then (u64 slot, u16 dtm) each
#   crc32        u32  over every preceding byte
#

MAGIC = b"ITLB"
HEADER = struct.Struct("<4sHBBBB")
COUNT = struct.Struct("<Q")
OVERFLOW_COUNT = struct.Struct("<I")
OVERFLOW_ENTRY = struct.Struct("<QH")
CRC = struct.Struct("<I")
TOPOLOGY_CODES = (Topology.PLANAR, Topology.CYLINDER, Topology.TORUS)


def dumps(table: SolvedTable) -> bytes:
    board = table.board
    parts = [
        HEADER.pack(MAGIC, table.version, board.files, board.ranks, TOPOLOGY_CODES.index(board.topology), len(table.material)),
        bytes((int(p.color) << 3) | p.kind.order for p in table.material.pieces),
        COUNT.pack(table.count),
        np.ascontiguousarray(table.packed, dtype=np.uint8).tobytes(),
        OVERFLOW_COUNT.pack(len(table.overflow)),
        b"".join(OVERFLOW_ENTRY.pack(slot, dtm) for slot, dtm in sorted(table.overflow.items())),
    ]
    body = b"".join(parts)
    return body + CRC.pack(zlib.crc32(body))


def loads(data: bytes) -> SolvedTable:
    if len(data) < HEADER.size + COUNT.size + OVERFLOW_COUNT.size + CRC.size:
        raise ChecksumMismatch("table file is truncated")
    body, (crc,) = data[: -CRC.size], CRC.unpack(data[-CRC.size :])
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch("table file checksum does not match")
    magic, version, files, ranks, topology, n = HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise VersionMismatch(f"not an ITLB table (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"table format version {version}, expected {FORMAT_VERSION}")
    offset = HEADER.size
    try:
        board = BoardSpec(files, ranks, TOPOLOGY_CODES[topology])
        material = MaterialSignature(tuple(Piece(Color(b >> 3), KIND_ORDER[b & 7]) for b in body[offset : offset + n]))
    except (IndexError, ValueError, InvariantViolation) as e:
        raise VersionMismatch(f"corrupt table header: {e}")
    offset += n
    (count,) = COUNT.unpack_from(body, offset)
    offset += COUNT.size
    if count != slot_count(material, board):
        raise VersionMismatch(f"slot count {count} inconsistent with {material.code} on {board.text}")
    packed = np.frombuffer(body, dtype=np.uint8, count=count, offset=offset).copy()
    offset += count
    (entries,) = OVERFLOW_COUNT.unpack_from(body, offset)
    offset += OVERFLOW_COUNT.size
    overflow = {}
    for _ in range(entries):
        slot, dtm = OVERFLOW_ENTRY.unpack_from(body, offset)
        overflow[slot] = dtm
        offset += OVERFLOW_ENTRY.size
    if offset != len(body):
        raise VersionMismatch("trailing bytes after overflow list")
    return SolvedTable(board, material, packed, overflow, version)


def save_table(table: SolvedTable, path: str | os.PathLike[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(table))
    tmp.replace(path)


def load_table(path: str | os.PathLike[str]) -> SolvedTable:
    return loads(Path(path).read_bytes())


def cache_path(cache_dir: str | os.PathLike[str], material: MaterialSignature, board: BoardSpec) -> Path:
    """Content address of a table: board, material and format version."""
    return Path(cache_dir) / f"{board.files}x{board.ranks}-{board.topology.value}-{material.code}-v{FORMAT_VERSION}.itlb"


def load_cached(cache_dir: str | os.PathLike[str], material: MaterialSignature, board: BoardSpec) -> SolvedTable | None:
    path = cache_path(cache_dir, material, board)
    if not path.is_file():
        return None
    try:
        table = load_table(path)
    except (OSError, ChecksumMismatch, VersionMismatch) as e:
        logging.warning(f"Ignoring cached table {path}: {e}")
        return None
    if table.board != board or table.material != material:
        logging.warning(f"Ignoring cached table {path}: header holds {table.material.code} on {table.board.text}")
        return None
    logging.debug(f"Loaded {material.code} on {board.text} from {path}")
    return table
