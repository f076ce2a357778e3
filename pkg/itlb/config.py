from __future__ import annotations

import os
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Literal

from itlb.board import STANDARD_BOARD, BoardSpec, Kind, check_material, parse_material
from itlb.errors import ParseError

CACHE_DIR_ENV = "ITLB_CACHE_DIR"
DEFAULT_MATERIALS = "KQ,KQ"
DEFAULT_MAX_MEMORY = 2 << 30
DEFAULT_MAX_REJECTIONS = 10_000

OutputFormat = Literal["json", "csv"]


def resolve_cache_dir(flag: str | None) -> str | None:
    """``--cache-dir`` wins, then ``$ITLB_CACHE_DIR``; ``None`` keeps tables in memory only."""
    if flag:
        return flag
    return os.environ.get(CACHE_DIR_ENV) or None


def parse_materials(text: str) -> tuple[tuple[Kind, ...], ...]:
    """``"KQ,K,KQ,K"`` -> one material per chain slot."""
    slots = tuple(parse_material(part) for part in text.split(","))
    if any(not slot for slot in slots):
        raise ParseError(f"empty slot in material list {text!r}", text.find(",,") + 1 if ",," in text else 0)
    return slots


def parse_board(size: str, topology: str = "planar") -> BoardSpec:
    return BoardSpec.parse(f"{size},{topology}")


@dataclass(frozen=True)
class ExperimentConfig:
    board: BoardSpec = STANDARD_BOARD
    materials: tuple[tuple[tuple[Kind, ...], ...], ...] = (parse_materials(DEFAULT_MATERIALS),)
    chain_lengths: tuple[int, ...] = (4,)
    samples: int = 1000
    seed: int = 0
    workers: int = 1
    output_format: OutputFormat = "json"
    output: str | None = None
    cache_dir: str | None = None
    budget_nodes: int | None = None
    max_memory: int = DEFAULT_MAX_MEMORY
    max_rejections: int = DEFAULT_MAX_REJECTIONS

    def validate(self) -> ExperimentConfig:
        if self.samples < 1:
            raise ValueError(f"samples must be at least 1, got {self.samples}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if self.output_format not in ("json", "csv"):
            raise ValueError(f"unknown output format {self.output_format!r}")
        if self.budget_nodes is not None and self.budget_nodes < 1:
            raise ValueError(f"budget must be positive, got {self.budget_nodes}")
        if self.max_memory < 1:
            raise ValueError(f"memory ceiling must be positive, got {self.max_memory}")
        for n in self.chain_lengths:
            if n < 4 or n % 2:
                raise ValueError(f"chain length must be even and at least 4, got {n}")
        for slots in self.materials:
            for n in self.chain_lengths:
                if n % len(slots):
                    raise ValueError(f"{len(slots)} slot materials cannot fill a chain of {n}")
            for material in slots:
                check_material(material, self.board)
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "board": self.board.text,
            "materials": [",".join("".join(k.value for k in m) for m in slots) for slots in self.materials],
            "chain_lengths": list(self.chain_lengths),
            "samples": self.samples,
            "seed": self.seed,
            "workers": self.workers,
            "format": self.output_format,
            "cache_dir": self.cache_dir,
            "budget_nodes": self.budget_nodes,
            "max_memory": self.max_memory,
            "max_rejections": self.max_rejections,
        }


@dataclass(frozen=True)
class HeuristicWeights:
    """Magicians row heuristic: pairs, friendly cards, distance to a pair, centrality."""

    pair: Fraction = Fraction(8)
    good: Fraction = Fraction(4)
    distance: Fraction = Fraction(1)
    centrality: Fraction = Fraction(1)

    @classmethod
    def of(cls, values: Sequence[int | str | Fraction]) -> HeuristicWeights:
        return cls(*(Fraction(v) for v in values))


DEFAULT_WEIGHTS = HeuristicWeights()
