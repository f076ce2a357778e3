from __future__ import annotations

from pathlib import Path

import pytest

from itlb.solver import Solver


@pytest.fixture(scope="session")
def table_cache(tmp_path_factory) -> Path:
    """One table cache for the whole run; 8x8 tables are built once."""
    return tmp_path_factory.mktemp("tables")


@pytest.fixture(scope="session")
def solver(table_cache: Path) -> Solver:
    return Solver(table_cache)
