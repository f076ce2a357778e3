from __future__ import annotations

from .board import (
    BoardSpec as BoardSpec,
    Color as Color,
    HalfPosition as HalfPosition,
    Kind as Kind,
    Topology as Topology,
    WholePosition as WholePosition,
    decode as decode,
    encode as encode,
    random_half as random_half,
    superpose as superpose,
)
from .intransitivity import (
    Chain as Chain,
    CycleCertificate as CycleCertificate,
    McReport as McReport,
    beats as beats,
    classify_chain as classify_chain,
    exhaustive_search as exhaustive_search,
    monte_carlo as monte_carlo,
    potential_feasibility as potential_feasibility,
    verify_certificate as verify_certificate,
)
from .movegen import Move as Move, apply as apply, attacks as attacks, legal_moves as legal_moves
from .solver import Solver as Solver, build_table as build_table, probe as probe, solve as solve
from .tablefile import load_table as load_table, save_table as save_table
from .tables import MaterialSignature as MaterialSignature, Outcome as Outcome, SolvedTable as SolvedTable

__version__ = "0.4.0"
