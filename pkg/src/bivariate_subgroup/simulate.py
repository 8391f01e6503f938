"""Synthetic trials with exponential event times and binary AEs."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import CellParams
from .trial_data import FactorScheme, PatientRecord, subgroup_levels


@dataclass(frozen=True)
class TrialDesign:
    """Enrollment and follow-up of a simulated trial.

    Parameters
    ----------
    n_per_arm : int
        Patients per arm, spread over subgroups by ``subgroup_probs``
        (uniform when omitted).
    followup : (float, float)
        Censoring times are uniform on this interval (years).
    change_time, hazard_factor : float, optional
        When set, every hazard is multiplied by ``hazard_factor`` after
        ``change_time``. Used to build deliberately misspecified data.
    """

    n_per_arm: int = 500
    followup: tuple[float, float] = (2.0, 5.0)
    subgroup_probs: tuple[float, ...] | None = None
    change_time: float | None = None
    hazard_factor: float = 1.0

    def __post_init__(self):
        if self.n_per_arm < 1:
            raise ValueError("n_per_arm must be positive")
        lo, hi = self.followup
        if not 0 <= lo <= hi:
            raise ValueError("followup must satisfy 0 <= low <= high")
        if not self.hazard_factor > 0:
            raise ValueError("hazard_factor must be positive")


def cell_params_from_dict(d: dict) -> CellParams:
    """Build CellParams from ``{"lam": [a][w][g], "p": [a][g]}``."""
    lam = np.asarray(d["lam"], dtype=float)
    p = np.asarray(d["p"], dtype=float)
    G = p.shape[-1] if p.ndim == 2 else -1
    if lam.shape != (2, 2, G) or p.shape != (2, G):
        raise ValueError("expected lam shaped [2][2][G] and p shaped [2][G]")
    if np.any(lam <= 0) or np.any((p < 0) | (p > 1)):
        raise ValueError("hazards must be positive and probabilities in [0, 1]")
    return CellParams.from_natural(lam, p)


def cell_params_to_dict(cell: CellParams) -> dict:
    return {"lam": cell.lam.tolist(), "p": cell.p.tolist()}


def load_cell_params(path: str | Path) -> CellParams:
    return cell_params_from_dict(json.loads(Path(path).read_text()))


def _event_times(rate: np.ndarray, design: TrialDesign, rng: np.random.Generator) -> np.ndarray:
    e = rng.exponential(size=rate.shape)
    if design.change_time is None:
        return e / rate
    # invert the piecewise-constant cumulative hazard
    c = design.change_time
    before = e / rate
    after = c + (e - rate * c) / (rate * design.hazard_factor)
    return np.where(before <= c, before, after)


def simulate_trial(cell: CellParams, scheme: FactorScheme, design: TrialDesign | None = None,
                   seed: int = 0) -> list[PatientRecord]:
    """Draw patient records for one trial from fixed cell parameters."""
    design = design or TrialDesign()
    G = scheme.n_subgroups
    lam, p = cell.lam, cell.p
    if lam.shape != (2, 2, G):
        raise ValueError(f"cell parameters describe {lam.shape[-1]} subgroups, scheme has {G}")
    probs = np.full(G, 1.0 / G) if design.subgroup_probs is None else np.asarray(design.subgroup_probs)
    if probs.shape != (G,) or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
        raise ValueError("subgroup_probs must be a probability vector over subgroups")
    rng = np.random.default_rng(seed)
    n = design.n_per_arm
    arm = np.repeat([0, 1], n)
    g = rng.choice(G, size=2 * n, p=probs)
    ae = (rng.random(2 * n) < p[arm, g]).astype(int)
    t_event = _event_times(lam[arm, ae, g], design, rng)
    censor = rng.uniform(*design.followup, size=2 * n)
    time = np.minimum(t_event, censor)
    event = (t_event <= censor).astype(int)
    width = len(str(2 * n))
    return [
        PatientRecord(f"s{i + 1:0{width}d}", int(arm[i]), float(time[i]), int(event[i]), int(ae[i]),
                      subgroup_levels(int(g[i]) + 1, scheme))
        for i in range(2 * n)
    ]


__all__ = ["TrialDesign", "simulate_trial", "cell_params_from_dict", "cell_params_to_dict",
           "load_cell_params"]
