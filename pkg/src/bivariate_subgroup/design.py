"""Design matrices linking subgroups to hazard and AE-probability coefficients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trial_data import FactorScheme, subgroup_levels

SATURATED = "saturated"
ADDITIVE = "additive"
PROPORTIONAL_HAZARDS = "ph"
KINDS = (SATURATED, ADDITIVE, PROPORTIONAL_HAZARDS)


@dataclass(frozen=True)
class ModelSpec:
    """Regression structure for the subgroup parameters.

    ``kind="ph"`` keeps one hazard coefficient vector per arm for the AE-free
    hazard and scales it by a single hazard ratio for AE-positive patients;
    ``base`` then selects the saturated or additive layout of that vector.
    """

    kind: str = SATURATED
    base: str = SATURATED

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.base not in (SATURATED, ADDITIVE):
            raise ValueError(f"base must be {SATURATED!r} or {ADDITIVE!r}, got {self.base!r}")
        if self.kind != PROPORTIONAL_HAZARDS:
            object.__setattr__(self, "base", self.kind)

    @property
    def structure(self) -> str:
        """The X/Z layout actually used (``saturated`` or ``additive``)."""
        return self.base

    @property
    def proportional_hazards(self) -> bool:
        return self.kind == PROPORTIONAL_HAZARDS

    @property
    def name(self) -> str:
        return f"ph-{self.base}" if self.proportional_hazards else self.kind

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """Parse ``saturated``, ``additive``, ``ph`` or ``ph-additive``."""
        if text.startswith("ph-"):
            return cls(PROPORTIONAL_HAZARDS, text[3:])
        return cls(text)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "base": self.base}


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    X: np.ndarray
    Z: np.ndarray
    column_labels: tuple[str, ...]
    has_intercept: bool

    @property
    def n_coef(self) -> int:
        return self.X.shape[1]

    def to_dict(self) -> dict:
        return {
            "column_labels": list(self.column_labels),
            "has_intercept": self.has_intercept,
            "X": self.X.astype(int).tolist(),
            "Z": self.Z.astype(int).tolist(),
        }


def column_index(factor: int, level: int, scheme: FactorScheme) -> int:
    """One-based column of the additive design for ``factor`` at ``level``.

    Both arguments are one-based. Level 1 is the reference category absorbed
    by the intercept and has no column.
    """
    sizes = scheme.sizes
    if not 1 <= factor <= len(sizes):
        raise ValueError(f"factor {factor} out of range 1..{len(sizes)}")
    if level == 1:
        raise ValueError("level 1 is the reference level and has no column")
    if not 2 <= level <= sizes[factor - 1]:
        raise ValueError(f"level {level} out of range 2..{sizes[factor - 1]}")
    offset = 0 if factor == 1 else 1 - factor + sum(sizes[: factor - 1])
    return offset + level


def build_design(scheme: FactorScheme, spec: ModelSpec) -> DesignMatrices:
    G = scheme.n_subgroups
    if spec.structure == SATURATED:
        X = np.eye(G)
        labels = tuple(scheme.subgroup_label(g) for g in range(1, G + 1))
        return DesignMatrices(X, X.copy(), labels, has_intercept=False)

    q = 1 + sum(p - 1 for p in scheme.sizes)
    X = np.zeros((G, q))
    X[:, 0] = 1.0
    for g in range(1, G + 1):
        for j, k in enumerate(subgroup_levels(g, scheme), start=1):
            if k >= 2:
                X[g - 1, column_index(j, k, scheme) - 1] = 1.0
    labels = ["intercept"]
    for j, f in enumerate(scheme.factors, start=1):
        for k in range(2, f.n_levels + 1):
            assert column_index(j, k, scheme) == len(labels) + 1
            labels.append(f"{f.name}={f.levels[k - 1]}")
    return DesignMatrices(X, X.copy(), tuple(labels), has_intercept=True)
