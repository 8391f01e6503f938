"""Posterior predictive checks and information criteria."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .model import CellParams, Posterior
from .trial_data import FactorScheme, PatientRecord, SummaryTable, assign_subgroup

MIN_REPLICATES = 50
MIN_CRITERION_DRAWS = 100
DEFAULT_PPP_REPLICATES = 200
DEFAULT_OVERLAY_REPLICATES = 50


# ---------------------------------------------------------------------------
# Kaplan-Meier


@dataclass(frozen=True)
class KMCurve:
    """Product-limit estimate: ``survival[k]`` holds on ``[times[k], times[k+1])``."""

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right")
        s = np.concatenate([[1.0], self.survival])
        return s[k]

    def quantile_time(self, u) -> np.ndarray:
        """Smallest tabulated time with survival <= ``u``; ``inf`` if none."""
        u = np.asarray(u, dtype=float)
        # survival is nonincreasing, so search on its negation
        k = np.searchsorted(-self.survival, -u, side="left")
        t = np.concatenate([self.times, [np.inf]])
        return t[k]


def km_estimate(times, events) -> KMCurve:
    """Kaplan-Meier estimate. Subjects censored at an event time are still
    at risk for that event."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    if times.size == 0:
        raise ValueError("km_estimate needs at least one observation")
    if times.shape != events.shape:
        raise ValueError("times and events must have the same shape")
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise ValueError("times must be finite and nonnegative")
    if not np.all(np.isin(events, (0, 1))):
        raise ValueError("events must be 0 or 1")
    uniq, inv = np.unique(times, return_inverse=True)
    d = np.bincount(inv, weights=events, minlength=uniq.size)
    total = np.bincount(inv, minlength=uniq.size)
    n_risk = times.size - np.concatenate([[0], np.cumsum(total)[:-1]])
    keep = d > 0
    t, d, n_risk = uniq[keep], d[keep], n_risk[keep]
    surv = np.cumprod(1.0 - d / n_risk)
    return KMCurve(t, surv, n_risk.astype(int), d.astype(int))


def rmst(curve: KMCurve, tau: float) -> float:
    """Area under the survival curve on ``[0, tau]``."""
    if not tau >= 0:
        raise ValueError("tau must be nonnegative")
    knots = np.concatenate([[0.0], curve.times[curve.times < tau], [tau]])
    levels = curve(knots[:-1])
    return float(np.sum(levels * np.diff(knots)))


# ---------------------------------------------------------------------------
# Posterior predictive simulation


@dataclass(frozen=True)
class Census:
    """Per-patient arm, one-based subgroup and censoring time used to
    replicate a trial."""

    arm: np.ndarray
    subgroup: np.ndarray
    censor: np.ndarray

    def __post_init__(self):
        if not (self.arm.shape == self.subgroup.shape == self.censor.shape):
            raise ValueError("census arrays must have equal length")
        if np.any(self.censor < 0):
            raise ValueError("censoring times must be nonnegative")

    @property
    def size(self) -> int:
        return self.arm.size

    @classmethod
    def administrative(cls, table: SummaryTable, horizon: float) -> "Census":
        """Every patient followed to ``horizon``; sizes from ``table.n``."""
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        G = table.n_subgroups
        arm = np.repeat(np.repeat([0, 1], G), table.n.ravel())
        sub = np.repeat(np.tile(np.arange(1, G + 1), 2), table.n.ravel())
        return cls(arm, sub, np.full(arm.size, float(horizon)))

    @classmethod
    def reverse_km(cls, records: Sequence[PatientRecord], scheme: FactorScheme,
                   rng: np.random.Generator) -> "Census":
        """Censoring times drawn from each arm's censoring distribution,
        estimated by Kaplan-Meier with the event indicator reversed.
        Draws beyond the last tabulated time are set to that arm's
        longest follow-up."""
        arm = np.array([r.arm for r in records], dtype=int)
        sub = np.array([assign_subgroup(r.levels, scheme) for r in records], dtype=int)
        time = np.array([r.time for r in records], dtype=float)
        event = np.array([r.event for r in records], dtype=int)
        censor = np.empty(arm.size)
        for a in (0, 1):
            idx = np.flatnonzero(arm == a)
            if idx.size == 0:
                continue
            curve = km_estimate(time[idx], 1 - event[idx])
            c = curve.quantile_time(rng.random(idx.size))
            censor[idx] = np.where(np.isfinite(c), c, time[idx].max())
        return cls(arm, sub, censor)


@dataclass(frozen=True)
class ReplicatedDataset:
    """One posterior predictive replicate of the trial."""

    draw: int
    arm: np.ndarray
    subgroup: np.ndarray
    event_time: np.ndarray
    censor: np.ndarray
    ae: np.ndarray

    @property
    def time(self) -> np.ndarray:
        return np.minimum(self.event_time, self.censor)

    @property
    def event(self) -> np.ndarray:
        return (self.event_time <= self.censor).astype(int)

    def summary(self, scheme: FactorScheme) -> SummaryTable:
        G = scheme.n_subgroups
        D = np.zeros((2, 2, G), dtype=np.int64)
        U = np.zeros((2, 2, G))
        V = np.zeros((2, G), dtype=np.int64)
        n = np.zeros((2, G), dtype=np.int64)
        g = self.subgroup - 1
        np.add.at(D, (self.arm, self.ae, g), self.event)
        np.add.at(U, (self.arm, self.ae, g), self.time)
        np.add.at(V, (self.arm, g), self.ae)
        np.add.at(n, (self.arm, g), 1)
        return SummaryTable(D, U, V, n, scheme)


def simulate_ppd(cells: CellParams, census: Census, n_reps: int, seed: int) -> list[ReplicatedDataset]:
    """Replicate the trial ``n_reps`` times, one posterior draw per replicate.

    ``cells`` holds posterior draws along its leading axis. Replicate ``r``
    uses its own generator seeded by ``(seed, r)``.
    """
    n_draws = cells.log_lam.shape[0] if cells.log_lam.ndim == 4 else 0
    if n_draws == 0:
        raise ValueError("simulate_ppd needs a nonempty batch of posterior draws")
    if n_reps < 1:
        raise ValueError("n_reps must be positive")
    lam, p = cells.lam, cells.p
    g = census.subgroup - 1
    out = []
    for r in range(n_reps):
        rng = np.random.default_rng([seed, r])
        s = int(rng.integers(n_draws))
        ae = (rng.random(census.size) < p[s, census.arm, g]).astype(int)
        rate = lam[s, census.arm, ae, g]
        t = rng.exponential(size=census.size) / rate
        out.append(ReplicatedDataset(s, census.arm, census.subgroup, t, census.censor, ae))
    return out


def arm_rmst(time, event, arm, tau: float) -> np.ndarray:
    """Kaplan-Meier RMST at ``tau`` for control and treatment."""
    time, event, arm = np.asarray(time), np.asarray(event), np.asarray(arm)
    return np.array([rmst(km_estimate(time[arm == a], event[arm == a]), tau) for a in (0, 1)])


def ppp_value(observed: float, replicated, min_reps: int = MIN_REPLICATES) -> float:
    """Two-sided posterior predictive p-value.

    ``2 min(P(rep >= obs), P(rep <= obs))`` with ties counted on both sides
    and each tail estimated as ``(1 + count) / (R + 1)``, so the smallest
    attainable value is ``2 / (R + 1)``. Capped at 1.
    """
    rep = np.asarray(replicated, dtype=float).ravel()
    if rep.size < min_reps:
        raise ValueError(f"need at least {min_reps} replicates, got {rep.size}")
    R = rep.size
    upper = (1 + np.sum(rep >= observed)) / (R + 1)
    lower = (1 + np.sum(rep <= observed)) / (R + 1)
    return float(min(1.0, 2.0 * min(upper, lower)))


@dataclass(frozen=True)
class PPCResult:
    tau: float
    observed: np.ndarray  # (2,)
    replicated: np.ndarray  # (R, 2)
    p_values: np.ndarray  # (2,)

    def to_dict(self) -> dict:
        return {
            "statistic": "km_rmst",
            "tau": self.tau,
            "resolution": 2.0 / (self.replicated.shape[0] + 1),
            "arms": [
                {"arm": a, "observed": float(self.observed[a]), "p_value": float(self.p_values[a]),
                 "replicated_mean": float(self.replicated[:, a].mean())}
                for a in (0, 1)
            ],
        }


def rmst_check(cells: CellParams, census: Census, observed_time, observed_event, tau: float,
               n_reps: int = DEFAULT_PPP_REPLICATES, seed: int = 0) -> PPCResult:
    """Posterior predictive p-values for per-arm Kaplan-Meier RMST."""
    obs = arm_rmst(observed_time, observed_event, census.arm, tau)
    reps = simulate_ppd(cells, census, n_reps, seed)
    stats = np.array([arm_rmst(r.time, r.event, r.arm, tau) for r in reps])
    p = np.array([ppp_value(obs[a], stats[:, a]) for a in (0, 1)])
    return PPCResult(float(tau), obs, stats, p)


def overlay_table(replicates: Sequence[ReplicatedDataset], observed_time=None, observed_event=None,
                  observed_arm=None, comments: dict | None = None) -> str:
    """Long-format CSV of Kaplan-Meier curves (replicate, arm, time, survival).

    Each curve starts with a row at time 0; the observed data, when given,
    use replicate id ``observed``.
    """
    buf = io.StringIO()
    for key, val in (comments or {}).items():
        buf.write(f"# {key}: {val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", "arm", "time", "survival"])

    def emit(rid, time, event, arm):
        for a in (0, 1):
            m = arm == a
            if not m.any():
                continue
            c = km_estimate(time[m], event[m])
            w.writerow([rid, a, repr(0.0), repr(1.0)])
            for t, s in zip(c.times, c.survival):
                w.writerow([rid, a, repr(float(t)), repr(float(s))])

    if observed_time is not None:
        emit("observed", np.asarray(observed_time), np.asarray(observed_event), np.asarray(observed_arm))
    for i, r in enumerate(replicates):
        emit(i, r.time, r.event, r.arm)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Information criteria


def pointwise_loglik(posterior: Posterior, u) -> np.ndarray:
    """Log-likelihood of each of the 4G Poisson and 2G binomial cells,
    shaped (draws, 6G)."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    poisson, binom = posterior.loglik_cells(u)
    return np.concatenate([poisson.reshape(u.shape[0], -1), binom.reshape(u.shape[0], -1)], axis=1)


def _check_draws(n: int) -> None:
    if n < MIN_CRITERION_DRAWS:
        raise ValueError(f"need at least {MIN_CRITERION_DRAWS} draws, got {n}")


@dataclass(frozen=True)
class Criterion:
    value: float
    penalty: float
    fit: float  # log-likelihood term (log L at the plug-in for DIC, lppd for WAIC)

    def to_dict(self) -> dict:
        return {"value": self.value, "penalty": self.penalty, "fit": self.fit}


def dic(posterior: Posterior, u) -> Criterion:
    """Deviance information criterion with the plug-in taken at the
    posterior mean of the unconstrained parameters."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    _check_draws(u.shape[0])
    ll = posterior.log_likelihood(u)
    ll_hat = float(posterior.log_likelihood(u.mean(axis=0)))
    p_d = 2.0 * (ll_hat - float(ll.mean()))
    return Criterion(-2.0 * ll_hat + 2.0 * p_d, p_d, ll_hat)


def waic(pointwise) -> Criterion:
    """Widely applicable information criterion from a (draws, units) matrix."""
    ll = np.asarray(pointwise, dtype=float)
    _check_draws(ll.shape[0])
    S = ll.shape[0]
    lppd = float(np.sum(logsumexp(ll, axis=0) - np.log(S)))
    p_waic = float(np.sum(ll.var(axis=0, ddof=1)))
    return Criterion(-2.0 * (lppd - p_waic), p_waic, lppd)


__all__ = [
    "KMCurve", "km_estimate", "rmst", "Census", "ReplicatedDataset", "simulate_ppd",
    "arm_rmst", "ppp_value", "PPCResult", "rmst_check", "overlay_table",
    "pointwise_loglik", "Criterion", "dic", "waic",
]
