"""Bayesian bivariate subgroup analysis of a time-to-event endpoint and a binary adverse event."""

__version__ = "0.1.0"

from .design import DesignMatrices, ModelSpec, build_design
from .estimator import BivariateSubgroupModel
from .measures import MeasureConfig, eta_utility, phi_ordering, theta_four, weighted_theta
from .model import CellParams, Hyperparams, Posterior
from .sampler import ChainConfig, ConvergenceReport, DrawSet, diagnose, run_chains
from .trial_data import (FactorScheme, PatientRecord, SummaryTable, compute_summaries,
                         ingest_patients, validate_summaries)

__all__ = [
    "__version__", "BivariateSubgroupModel", "CellParams", "ChainConfig", "ConvergenceReport",
    "DesignMatrices", "DrawSet", "FactorScheme", "Hyperparams", "MeasureConfig", "ModelSpec",
    "PatientRecord", "Posterior", "SummaryTable", "build_design", "compute_summaries", "diagnose",
    "eta_utility", "ingest_patients", "phi_ordering", "run_chains", "theta_four",
    "validate_summaries", "weighted_theta",
]
