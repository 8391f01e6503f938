"""Subgroup risk-benefit measures computed per posterior draw.

All functions accept :class:`~bivariate_subgroup.model.CellParams` with
arbitrary leading batch dimensions (typically one per draw). Passing
``g=None`` returns every subgroup along the last axis; an integer ``g`` is
one-based and selects a single subgroup.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import CellParams

MEASURE_NAMES = ("theta1", "theta2", "theta3", "theta4", "theta_tilde", "eta", "phi")
FOREST_COLUMNS = ("measure", "subgroup", "mean", "lo95", "hi95", "overall", "model_kind")
MIN_SUMMARY_DRAWS = 100


@dataclass(frozen=True)
class MeasureConfig:
    """Settings for the derived measures.

    Parameters
    ----------
    kappa0 : float
        Horizon in years for the four joint outcome probabilities.
    tau_h : float
        Truncation in years for the utility composite.
    weights : tuple of 4 floats
        Outcome utilities ``b1..b4`` for the weighted composite.
    eta_weights : sequence of (b1, b2)
        Survival weights with and without an AE; one ``eta`` table per pair.
    delta : float
        Indifference parameter for the ordering measure.
    """

    kappa0: float = 3.0
    tau_h: float = 3.0
    weights: tuple[float, float, float, float] = (1.0, 0.8, 0.0, 0.0)
    eta_weights: tuple[tuple[float, float], ...] = ((0.8, 1.0), (0.5, 1.0))
    delta: float = 0.2

    def __post_init__(self):
        if not self.kappa0 > 0:
            raise ValueError("kappa0 must be positive")
        if not self.tau_h > 0:
            raise ValueError("tau_h must be positive")
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        w = tuple(float(b) for b in self.weights)
        if len(w) != 4 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be four finite numbers")
        object.__setattr__(self, "weights", w)
        ew = tuple((float(b1), float(b2)) for b1, b2 in self.eta_weights)
        object.__setattr__(self, "eta_weights", ew)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights)
        d["eta_weights"] = [list(p) for p in self.eta_weights]
        return d


def _select(x: np.ndarray, g: int | None) -> np.ndarray:
    if g is None:
        return x
    G = x.shape[-1]
    if not 1 <= g <= G:
        raise ValueError(f"subgroup {g} out of range 1..{G}")
    return x[..., g - 1]


def _arm_cells(cell: CellParams, a: int, w: int, g: int | None):
    lam = _select(cell.lam[..., a, w, :], g)
    p = _select(cell.p[..., a, :], g)
    return lam, (p if w else 1.0 - p)


def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    return t


def joint_survival(cell: CellParams, a: int, t, w: int, g: int | None = None):
    """P(T > t, W = w) for arm ``a``."""
    t = _check_time(t)
    lam, pw = _arm_cells(cell, a, w, g)
    return np.exp(-lam * t) * pw


def joint_cdf(cell: CellParams, a: int, t, w: int, g: int | None = None):
    """P(T <= t, W = w) for arm ``a``."""
    t = _check_time(t)
    lam, pw = _arm_cells(cell, a, w, g)
    return -np.expm1(-lam * t) * pw


def theta_four(cell: CellParams, kappa0: float = 3.0, g: int | None = None) -> np.ndarray:
    """Arm differences in the four joint outcome probabilities at ``kappa0``.

    Returns an array with a trailing axis of length 4 ordered as
    (event-free without AE, event-free with AE, event without AE,
    event with AE). The four differences sum to zero.
    """
    if not kappa0 > 0:
        raise ValueError("kappa0 must be positive")
    s0 = joint_survival(cell, 1, kappa0, 0, g) - joint_survival(cell, 0, kappa0, 0, g)
    s1 = joint_survival(cell, 1, kappa0, 1, g) - joint_survival(cell, 0, kappa0, 1, g)
    f0 = joint_cdf(cell, 1, kappa0, 0, g) - joint_cdf(cell, 0, kappa0, 0, g)
    f1 = joint_cdf(cell, 1, kappa0, 1, g) - joint_cdf(cell, 0, kappa0, 1, g)
    return np.stack([s0, s1, f0, f1], axis=-1)


def weighted_theta(theta: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    """Expected utility difference ``sum_j b_j theta_j`` over the last axis."""
    b = np.asarray(weights, dtype=float)
    if b.shape != (4,) or not np.all(np.isfinite(b)):
        raise ValueError("weights must be four finite numbers")
    return np.asarray(theta) @ b


def _truncated_mean(lam: np.ndarray, tau: float) -> np.ndarray:
    # integral of exp(-lam t) over [0, tau]; tends to tau as lam -> 0
    x = lam * tau
    small = x < 1e-8
    safe = np.where(small, 1.0, lam)
    return np.where(small, tau * (1.0 - 0.5 * x), -np.expm1(-x) / safe)


def expected_utility(cell: CellParams, a: int, b1: float, b2: float, tau_h: float,
                     g: int | None = None) -> np.ndarray:
    """E[H | arm a] where H credits ``b1`` per year lived with an AE and
    ``b2`` per year lived without one, truncated at ``tau_h``."""
    if not tau_h > 0:
        raise ValueError("tau_h must be positive")
    lam1, p1 = _arm_cells(cell, a, 1, g)
    lam0, p0 = _arm_cells(cell, a, 0, g)
    return b1 * p1 * _truncated_mean(lam1, tau_h) + b2 * p0 * _truncated_mean(lam0, tau_h)


def eta_utility(cell: CellParams, b1: float = 0.8, b2: float = 1.0, tau_h: float = 3.0,
                g: int | None = None) -> np.ndarray:
    """Treatment minus control expected utility."""
    return (expected_utility(cell, 1, b1, b2, tau_h, g)
            - expected_utility(cell, 0, b1, b2, tau_h, g))


def phi_ordering(cell: CellParams, delta: float = 0.2, g: int | None = None) -> np.ndarray:
    """2 P(treated patient's outcome is preferred) - 1, in closed form."""
    if not delta >= 0:
        raise ValueError("delta must be nonnegative")
    l00 = _select(cell.lam[..., 0, 0, :], g)
    l01 = _select(cell.lam[..., 0, 1, :], g)
    l10 = _select(cell.lam[..., 1, 0, :], g)
    l11 = _select(cell.lam[..., 1, 1, :], g)
    p0 = _select(cell.p[..., 0, :], g)
    p1 = _select(cell.p[..., 1, :], g)
    k = 1.0 + delta
    win = (l00 * p1 * (1 - p0) / (l11 * k + l00)
           + l01 * (1 - p1) * p0 / (l10 / k + l01)
           + l00 * (1 - p1) * (1 - p0) / (l10 + l00)
           + l01 * p1 * p0 / (l11 + l01))
    return 2.0 * win - 1.0


def treated_preferred(t_i, w_i, t_j, w_j, delta: float) -> np.ndarray:
    """Outcome ordering for a treated patient ``i`` against a control ``j``.

    Discordant AE status requires the AE-positive patient to survive more
    than ``1 + delta`` times as long; concordant pairs compare times.
    """
    t_i, w_i, t_j, w_j = (np.asarray(x) for x in (t_i, w_i, t_j, w_j))
    k = 1.0 + delta
    return np.where(
        (w_i == 1) & (w_j == 0), t_i > t_j * k,
        np.where((w_i == 0) & (w_j == 1), ~(t_j > t_i * k), t_i > t_j),
    )


def phi_mc_oracle(cell: CellParams, delta: float, n_pairs: int, seed: int,
                  g: int = 1) -> tuple[float, float]:
    """Monte Carlo estimate of the ordering measure and its standard error.

    ``cell`` must hold a single parameter set (no batch dimensions).
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    if cell.log_lam.ndim != 3:
        raise ValueError("phi_mc_oracle expects unbatched CellParams")
    rng = np.random.default_rng(seed)
    lam, p = cell.lam[..., g - 1], cell.p[..., g - 1]
    w_i = (rng.random(n_pairs) < p[1]).astype(int)
    w_j = (rng.random(n_pairs) < p[0]).astype(int)
    t_i = rng.exponential(1.0 / lam[1, w_i])
    t_j = rng.exponential(1.0 / lam[0, w_j])
    score = 2.0 * treated_preferred(t_i, w_i, t_j, w_j, delta) - 1.0
    se = score.std(ddof=1) / np.sqrt(n_pairs) if n_pairs > 1 else float("inf")
    return float(score.mean()), float(se)


@dataclass(frozen=True)
class MeasureSummary:
    """Posterior summaries of one measure across subgroups."""

    measure: str
    labels: tuple[str, ...]
    mean: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    prob_positive: np.ndarray
    overall: float
    meta: dict = field(default_factory=dict)

    def rows(self, model_kind: str = "") -> list[dict]:
        return [
            {"measure": self.measure, "subgroup": lab, "mean": float(m), "lo95": float(lo),
             "hi95": float(hi), "overall": self.overall, "model_kind": model_kind}
            for lab, m, lo, hi in zip(self.labels, self.mean, self.lo95, self.hi95)
        ]


def summarize_draws(values, measure: str = "value", labels: Sequence[str] | None = None,
                    min_draws: int = MIN_SUMMARY_DRAWS) -> MeasureSummary:
    """Posterior mean, equal-tailed 95% interval and P(> 0) per subgroup.

    ``values`` is shaped (draws, G); the overall value is the unweighted
    mean of the subgroup posterior means.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] == 0:
        raise ValueError("no draws to summarize")
    if v.shape[0] < min_draws:
        raise ValueError(f"need at least {min_draws} draws, got {v.shape[0]}")
    G = v.shape[1]
    labels = tuple(labels) if labels is not None else tuple(str(g) for g in range(1, G + 1))
    if len(labels) != G:
        raise ValueError("one label per subgroup required")
    mean = v.mean(axis=0)
    lo, hi = np.quantile(v, [0.025, 0.975], axis=0)
    # guard against rounding in the quantile interpolation for constant draws
    lo, hi = np.minimum(lo, mean), np.maximum(hi, mean)
    return MeasureSummary(measure, labels, mean, lo, hi, (v > 0).mean(axis=0), float(mean.mean()))


def compute_measures(cell: CellParams, config: MeasureConfig | None = None) -> dict[str, np.ndarray]:
    """Per-draw values of every measure, keyed by name, each (draws, G)."""
    config = config or MeasureConfig()
    theta = theta_four(cell, config.kappa0)
    out = {f"theta{j + 1}": theta[..., j] for j in range(4)}
    out["theta_tilde"] = weighted_theta(theta, config.weights)
    for b1, b2 in config.eta_weights:
        out[f"eta[b1={b1:g},b2={b2:g}]"] = eta_utility(cell, b1, b2, config.tau_h)
    out["phi"] = phi_ordering(cell, config.delta)
    return out


def summarize_measures(values: Mapping[str, np.ndarray], labels: Sequence[str] | None = None,
                       min_draws: int = MIN_SUMMARY_DRAWS) -> list[MeasureSummary]:
    return [summarize_draws(v, name, labels, min_draws) for name, v in values.items()]


def forest_table(summaries: Sequence[MeasureSummary], model_kind: str = "",
                 comments: Mapping[str, str] | None = None) -> str:
    """Render summaries as CSV text, optionally preceded by ``# key: value`` lines."""
    buf = io.StringIO()
    for key, val in (comments or {}).items():
        buf.write(f"# {key}: {val}\n")
    writer = csv.DictWriter(buf, fieldnames=FOREST_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for s in summaries:
        for row in s.rows(model_kind):
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


__all__ = [
    "MeasureConfig", "MeasureSummary", "joint_survival", "joint_cdf", "theta_four",
    "weighted_theta", "expected_utility", "eta_utility", "phi_ordering", "treated_preferred",
    "phi_mc_oracle", "summarize_draws", "summarize_measures", "compute_measures", "forest_table",
]
