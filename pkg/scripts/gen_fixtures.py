from __future__ import annotations

import json
import logging
import os

import numpy as np

from itlb.board import BoardSpec, Color, Kind, enumerate_halves, superpose, superposable
from itlb.intransitivity import Chain, Direction, classify_chain, first_cycle
from itlb.magicians import MagBoard, perfect_values
from itlb.solver import Solver
from itlb.tables import MaterialSignature

CERTIFICATE_BOARD = BoardSpec(8, 8)
CERTIFICATE_HALF = (Kind.KING, Kind.QUEEN)
# every 31st KQ half in enumeration order, 131 per color
HALF_STRIDE = 31


def gen_certificate(base_dir: str, cache_dir: str | None):
    """First 4-cycle among strided KQ halves, searched the way ``exhaustive_search`` searches all of them."""
    filepath = os.path.join(base_dir, "cycle_kq_8x8.cert")
    solver = Solver(cache_dir, workers=os.cpu_count() or 1)
    solver.table(MaterialSignature.from_kinds(CERTIFICATE_HALF, CERTIFICATE_HALF), CERTIFICATE_BOARD)
    whites = list(enumerate_halves(CERTIFICATE_HALF, Color.WHITE, CERTIFICATE_BOARD))[::HALF_STRIDE]
    blacks = list(enumerate_halves(CERTIFICATE_HALF, Color.BLACK, CERTIFICATE_BOARD))[::HALF_STRIDE]
    matrix = np.zeros((len(whites), len(blacks)), dtype=np.int8)
    for w, white in enumerate(whites):
        for b, black in enumerate(blacks):
            if superposable(white, black):
                winner = solver.solve(superpose(white, black)).winner
                matrix[w, b] = 0 if winner is None else (1 if winner is Color.WHITE else -1)
    found = []
    for direction in Direction:
        white_wins = 1 if direction is Direction.FORWARD else -1
        steps = [matrix == white_wins, (matrix == -white_wins).T] * 2
        picks = first_cycle(steps)
        if picks is not None:
            found.append((picks, list(Direction).index(direction)))
    if not found:
        raise SystemExit(f"no cycle among {len(whites)} x {len(blacks)} halves, try another stride")
    picks, _ = min(found)
    chain = Chain(tuple((whites if j % 2 == 0 else blacks)[p] for j, p in enumerate(picks)))
    certificate = classify_chain(chain, solver).certificate
    with open(filepath, "w", encoding="utf-8") as f:
        f.write(f"# stride {HALF_STRIDE}: first cycle among {len(whites)} x {len(blacks)} KQ halves\n")
        f.write(certificate.to_text())


def gen_magicians(base_dir: str):
    filepath = os.path.join(base_dir, "magicians_n3.json")
    values = perfect_values(3)
    pinned = {MagBoard.from_code(code, 3).text: int(value) for code, value in enumerate(values)}
    with open(filepath, "w", encoding="utf-8") as f:
        json.dump(pinned, f, indent=2, sort_keys=True)


def main():
    logging.basicConfig(format="%(levelname)s: %(message)s", level=logging.INFO)
    base_dir = "./tests/test_files"
    if not os.path.isdir(base_dir):
        os.makedirs(base_dir)
    gen_magicians(base_dir)
    gen_certificate(base_dir, os.environ.get("ITLB_CACHE_DIR"))


if __name__ == "__main__":
    main()
