"""Published SPRINT subgroup summaries (8 subgroups: sex x age x CKD).

Only the summary statistics are public. Per-arm subgroup sizes are not
reported, so they are reconstructed from the subgroup totals ``N_g`` by
giving the control arm ``ceil(N_g / 2)`` and the treatment arm the rest.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from .trial_data import FactorScheme, SummaryTable

SCHEME = FactorScheme.from_levels(
    [
        ("sex", ("Male", "Female")),
        ("age", ("lt75", "ge75")),
        ("ckd", ("No", "Yes")),
    ]
)

# rows in subgroup order; columns:
# (D01, U01), (D00, U00), V0, (D11, U11), (D10, U10), V1, N
_ROWS = [
    ((3, 92.00), (96, 5546.11), 29, (10, 174.05), (54, 5446.53), 61, 3528),
    ((3, 48.41), (28, 1364.73), 16, (5, 103.15), (25, 1227.70), 32, 858),
    ((1, 19.57), (46, 1277.47), 8, (1, 57.67), (26, 1265.94), 19, 913),
    ((6, 40.00), (47, 977.71), 15, (7, 88.31), (38, 974.85), 31, 730),
    ((0, 40.08), (31, 2641.97), 13, (0, 67.47), (25, 2705.38), 20, 1706),
    ((2, 42.41), (12, 948.66), 14, (4, 50.23), (16, 1000.35), 16, 617),
    ((0, 37.84), (16, 835.07), 12, (1, 60.98), (18, 778.16), 20, 568),
    ((3, 30.81), (25, 612.09), 11, (2, 66.44), (11, 634.87), 21, 441),
]

SIZE_NOTE = (
    "ASSUMPTION: per-arm subgroup sizes n_ag are not published; "
    "n_0g = ceil(N_g/2), n_1g = floor(N_g/2)"
)

FIXTURE_NAME = "sprint_subgroups.json"


def subgroup_totals() -> np.ndarray:
    return np.array([r[6] for r in _ROWS])


def build_table() -> SummaryTable:
    """Assemble the fixture from the literal table values."""
    G = len(_ROWS)
    D = np.zeros((2, 2, G), dtype=np.int64)
    U = np.zeros((2, 2, G))
    V = np.zeros((2, G), dtype=np.int64)
    n = np.zeros((2, G), dtype=np.int64)
    for g, (c1, c0, v0, t1, t0, v1, N) in enumerate(_ROWS):
        (D[0, 1, g], U[0, 1, g]), (D[0, 0, g], U[0, 0, g]) = c1, c0
        (D[1, 1, g], U[1, 1, g]), (D[1, 0, g], U[1, 0, g]) = t1, t0
        V[0, g], V[1, g] = v0, v1
        n[0, g] = -(-N // 2)
        n[1, g] = N // 2
    return SummaryTable(D, U, V, n, SCHEME, (SIZE_NOTE,))


def fixture_path():
    return resources.files("bivariate_subgroup") / "data" / FIXTURE_NAME


def load_table() -> SummaryTable:
    """Load the packaged JSON fixture."""
    return SummaryTable.from_json(fixture_path().read_text())
