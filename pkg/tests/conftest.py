import json

import numpy as np
import pytest

from bivariate_subgroup import sprint
from bivariate_subgroup.model import CellParams
from bivariate_subgroup.trial_data import FactorScheme

SMALL_CELLS = {
    "lam": [[[0.2, 0.25, 0.3, 0.2], [0.4, 0.5, 0.45, 0.3]],
            [[0.15, 0.2, 0.25, 0.15], [0.35, 0.4, 0.4, 0.3]]],
    "p": [[0.1, 0.15, 0.2, 0.1], [0.2, 0.25, 0.3, 0.2]],
}


@pytest.fixture(scope="session")
def sprint_table():
    return sprint.load_table()


@pytest.fixture(scope="session")
def small_scheme():
    return FactorScheme.from_levels([("sex", ("M", "F")), ("age", ("young", "old"))])


@pytest.fixture(scope="session")
def small_cells():
    return CellParams.from_natural(np.array(SMALL_CELLS["lam"]), np.array(SMALL_CELLS["p"]))


@pytest.fixture
def small_cells_file(tmp_path):
    path = tmp_path / "cells.json"
    path.write_text(json.dumps(SMALL_CELLS))
    return path


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance(capsys):
    """Record one result line per criterion; echoed live and in the summary."""

    def record(criterion: str, ok: bool | None, detail: str) -> bool:
        status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {criterion}: {status}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
