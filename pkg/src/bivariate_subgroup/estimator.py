"""Scikit-learn style front end for fitting and summarizing the model."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from . import measures as M
from .checking import Criterion, dic, pointwise_loglik, waic
from .design import ModelSpec, build_design
from .model import CellParams, Hyperparams, Posterior
from .sampler import ChainConfig, DrawSet, diagnose, run_chains
from .trial_data import (FactorScheme, PatientRecord, SummaryTable, check_summary_table,
                         compute_summaries)


def _as_table(X, scheme: FactorScheme | None) -> SummaryTable:
    if isinstance(X, (list, tuple)) and (len(X) == 0 or isinstance(X[0], PatientRecord)):
        if scheme is None:
            raise ValueError("a FactorScheme is required to summarize patient records")
        X = compute_summaries(list(X), scheme)
    return check_summary_table(X)


class BivariateSubgroupModel(BaseEstimator):
    """Hierarchical exponential/binomial model for a primary event time and
    a binary adverse event across patient subgroups.

    Parameters
    ----------
    kind : {"saturated", "additive", "ph"}
        Regression structure. ``"ph"`` shares one hazard ratio between
        AE-positive and AE-free patients.
    base : {"saturated", "additive"}
        Design used under ``kind="ph"``; ignored otherwise.
    hyperparams : Hyperparams, optional
        Prior scales. Defaults to diffuse means and unit log-spread scales.
    chains, iterations, warmup, seed, algorithm, target_accept, max_depth
        Passed to :class:`~bivariate_subgroup.sampler.ChainConfig`.
    rhat_threshold : float
        Convergence is declared when every split R-hat is at most this.

    Attributes
    ----------
    table_ : SummaryTable
    design_ : DesignMatrices
    posterior_ : Posterior
    draws_ : DrawSet
    convergence_ : ConvergenceReport
    cell_params_ : CellParams
        Hazards and AE probabilities for every kept draw.
    """

    def __init__(self, kind="saturated", base="saturated", hyperparams=None, chains=4,
                 iterations=1500, warmup=500, seed=0, algorithm="nuts", target_accept=None,
                 max_depth=10, rhat_threshold=1.05):
        self.kind = kind
        self.base = base
        self.hyperparams = hyperparams
        self.chains = chains
        self.iterations = iterations
        self.warmup = warmup
        self.seed = seed
        self.algorithm = algorithm
        self.target_accept = target_accept
        self.max_depth = max_depth
        self.rhat_threshold = rhat_threshold

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.kind, self.base)

    def chain_config(self) -> ChainConfig:
        return ChainConfig(chains=self.chains, iterations=self.iterations, warmup=self.warmup,
                           seed=self.seed, target_accept=self.target_accept,
                           algorithm=self.algorithm, max_depth=self.max_depth)

    def _posterior(self, table: SummaryTable) -> Posterior:
        spec = self.spec
        hp = self.hyperparams if self.hyperparams is not None else Hyperparams()
        return Posterior(table, build_design(table.scheme, spec), spec, hp)

    def fit(self, X, y=None, scheme: FactorScheme | None = None, meta: dict | None = None):
        """Sample the posterior.

        ``X`` is a SummaryTable (or its dict / JSON path) or a list of
        PatientRecord together with ``scheme``.
        """
        cfg = self.chain_config()
        table = _as_table(X, scheme)
        post = self._posterior(table)
        info = {"model": post.spec.to_dict(), "hyperparams": post.hyperparams.to_dict()}
        info.update(meta or {})
        draws = run_chains(post, cfg, names=post.layout.names(), meta=info)
        return self._finish(table, post, draws)

    def from_draws(self, X, draws: DrawSet, scheme: FactorScheme | None = None):
        """Attach previously saved draws instead of sampling."""
        table = _as_table(X, scheme)
        post = self._posterior(table)
        if draws.dim != post.dim:
            raise ValueError(f"draws have dimension {draws.dim}, model needs {post.dim}")
        return self._finish(table, post, draws)

    def _finish(self, table, post, draws):
        self.table_ = table
        self.design_ = post.design
        self.posterior_ = post
        self.draws_ = draws
        self.convergence_ = diagnose(draws, self.rhat_threshold)
        self.cell_params_ = post.cell_params(draws.flat())
        self.n_parameters_ = post.dim
        return self

    # -- derived measures ---------------------------------------------------

    def _cells(self) -> CellParams:
        check_is_fitted(self, "draws_")
        return self.cell_params_

    @property
    def subgroup_labels(self) -> list[str]:
        check_is_fitted(self, "table_")
        s = self.table_.scheme
        return [s.subgroup_label(g) for g in range(1, s.n_subgroups + 1)]

    def theta(self, kappa0: float = 3.0) -> np.ndarray:
        """Per-draw four-outcome differences, shaped (draws, G, 4)."""
        return M.theta_four(self._cells(), kappa0)

    def weighted_theta(self, weights: Sequence[float] = (1.0, 0.8, 0.0, 0.0),
                       kappa0: float = 3.0) -> np.ndarray:
        return M.weighted_theta(self.theta(kappa0), weights)

    def eta(self, b1: float = 0.8, b2: float = 1.0, tau_h: float = 3.0) -> np.ndarray:
        return M.eta_utility(self._cells(), b1, b2, tau_h)

    def phi(self, delta: float = 0.2) -> np.ndarray:
        return M.phi_ordering(self._cells(), delta)

    def measures(self, config: M.MeasureConfig | None = None) -> list[M.MeasureSummary]:
        values = M.compute_measures(self._cells(), config)
        return M.summarize_measures(values, self.subgroup_labels)

    def dic(self) -> Criterion:
        check_is_fitted(self, "draws_")
        return dic(self.posterior_, self.draws_.flat())

    def waic(self) -> Criterion:
        check_is_fitted(self, "draws_")
        return waic(pointwise_loglik(self.posterior_, self.draws_.flat()))

    def predict_cell_params(self) -> CellParams:
        """Posterior mean hazards and AE probabilities."""
        c = self._cells()
        return CellParams.from_natural(c.lam.mean(axis=0), c.p.mean(axis=0))


__all__ = ["BivariateSubgroupModel", "NotFittedError"]
