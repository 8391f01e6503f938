"""Likelihood, hierarchical prior and the unconstrained parameterisation.

Every function here accepts arrays with arbitrary leading batch dimensions,
so the same code evaluates one sampler state or a whole set of draws.

Unconstrained vector layout (``h`` hazard vectors: 4 ordered (a, w) =
(0,0), (0,1), (1,0), (1,1); or 2 ordered by arm for the proportional
hazards model)::

    beta[h, q] | gamma[2, q] | mu[h] | mu_gamma[2] | log tau[h] |
    log tau_gamma[2] | atanh rho_mu[2] | atanh rho_tau[2] | log phi

The correlation blocks are absent for proportional hazards, and ``log phi``
is present only there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import gammaln, log_expit

from . import _kernel
from .design import DesignMatrices, ModelSpec
from .trial_data import SummaryTable

LOG_HALF = np.log(0.5)
LOG_2PI = np.log(2 * np.pi)


def _pair(x) -> np.ndarray:
    a = np.broadcast_to(np.asarray(x, dtype=float), (2,)).copy()
    if np.any(~(a > 0)):
        raise ValueError(f"scales must be positive, got {x!r}")
    return a


@dataclass(frozen=True)
class Hyperparams:
    """Prior scales; per-arm pairs, scalars broadcast to both arms."""

    sigma_mu: np.ndarray = 100.0
    sigma_tau: np.ndarray = 1.0
    sigma_mu_gamma: np.ndarray = 100.0
    sigma_tau_gamma: np.ndarray = 1.0
    sigma_intercept_beta: float = 100.0
    sigma_intercept_gamma: float = 100.0
    sigma_log_phi: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.startswith("sigma_intercept") or f.name == "sigma_log_phi":
                if not float(v) > 0:
                    raise ValueError(f"{f.name} must be positive, got {v!r}")
                object.__setattr__(self, f.name, float(v))
            else:
                object.__setattr__(self, f.name, _pair(v))

    def to_dict(self) -> dict:
        return {
            f.name: (getattr(self, f.name).tolist() if isinstance(getattr(self, f.name), np.ndarray)
                     else getattr(self, f.name))
            for f in fields(self)
        }


@dataclass(frozen=True)
class Layout:
    """Slices of the unconstrained vector for one model/design combination."""

    spec: ModelSpec
    n_coef: int
    n_subgroups: int
    slices: dict = field(default_factory=dict)
    dim: int = 0

    @classmethod
    def build(cls, spec: ModelSpec, design: DesignMatrices) -> "Layout":
        q = design.n_coef
        h = 2 if spec.proportional_hazards else 4
        sizes = [("beta", h * q), ("gamma", 2 * q), ("mu", h), ("mu_gamma", 2),
                 ("log_tau", h), ("log_tau_gamma", 2)]
        if spec.proportional_hazards:
            sizes.append(("log_phi", 1))
        else:
            sizes += [("z_rho_mu", 2), ("z_rho_tau", 2)]
        slices, start = {}, 0
        for name, size in sizes:
            slices[name] = slice(start, start + size)
            start += size
        return cls(spec, q, design.X.shape[0], slices, start)

    @property
    def n_hazard(self) -> int:
        return 2 if self.spec.proportional_hazards else 4

    def names(self) -> list[str]:
        """Coordinate names such as ``beta[1,0][3]`` for audit output."""
        q, out = self.n_coef, []
        haz = ["0", "1"] if self.spec.proportional_hazards else ["0,0", "0,1", "1,0", "1,1"]
        for k in haz:
            out += [f"beta[{k}][{j + 1}]" for j in range(q)]
        for a in (0, 1):
            out += [f"gamma[{a}][{j + 1}]" for j in range(q)]
        out += [f"mu[{k}]" for k in haz] + ["mu_gamma[0]", "mu_gamma[1]"]
        out += [f"log_tau[{k}]" for k in haz] + ["log_tau_gamma[0]", "log_tau_gamma[1]"]
        if self.spec.proportional_hazards:
            out.append("log_phi")
        else:
            out += ["z_rho_mu[0]", "z_rho_mu[1]", "z_rho_tau[0]", "z_rho_tau[1]"]
        return out

    def blocks(self) -> list[np.ndarray]:
        """Index groups updated jointly by the blockwise sampler."""
        q, s = self.n_coef, self.slices
        idx = np.arange(self.dim)
        out = [idx[s["beta"]][k * q:(k + 1) * q] for k in range(self.n_hazard)]
        out += [idx[s["gamma"]][a * q:(a + 1) * q] for a in (0, 1)]
        out.append(np.concatenate([idx[s["mu"]], idx[s["mu_gamma"]]]))
        spreads = [idx[s["log_tau"]], idx[s["log_tau_gamma"]]]
        if self.spec.proportional_hazards:
            out.append(idx[s["log_phi"]])
        else:
            spreads += [idx[s["z_rho_mu"]], idx[s["z_rho_tau"]]]
        out.append(np.concatenate(spreads))
        return out


@dataclass(frozen=True)
class ParameterState:
    """Constrained parameters, possibly with leading batch dimensions."""

    beta: np.ndarray  # (..., h, q)
    gamma: np.ndarray  # (..., 2, q)
    mu: np.ndarray  # (..., h)
    mu_gamma: np.ndarray  # (..., 2)
    tau: np.ndarray  # (..., h)
    tau_gamma: np.ndarray  # (..., 2)
    rho_mu: np.ndarray | None = None  # (..., 2)
    rho_tau: np.ndarray | None = None
    log_phi: np.ndarray | None = None  # (...,)


@dataclass(frozen=True)
class CellParams:
    """Hazards ``lam[..., a, w, g]`` (per year) and AE probabilities ``p[..., a, g]``."""

    log_lam: np.ndarray
    logit_p: np.ndarray

    @property
    def lam(self) -> np.ndarray:
        return np.exp(self.log_lam)

    @property
    def p(self) -> np.ndarray:
        return np.exp(log_expit(self.logit_p))

    @classmethod
    def from_natural(cls, lam, p) -> "CellParams":
        lam = np.asarray(lam, dtype=float)
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return cls(np.log(lam), np.log(p) - np.log1p(-p))

    def take(self, index) -> "CellParams":
        return CellParams(self.log_lam[index], self.logit_p[index])


def _log_sech2(z):
    # log(1 - tanh(z)^2), stable for large |z|
    az = np.abs(z)
    return 2.0 * (np.log(2.0) - az - np.log1p(np.exp(-2.0 * az)))


def to_constrained(u, layout: Layout) -> tuple[ParameterState, np.ndarray]:
    """Map unconstrained ``u[..., dim]`` to parameters and the log |Jacobian|."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != layout.dim:
        raise ValueError(f"expected unconstrained dimension {layout.dim}, got {u.shape[-1]}")
    s, q, h = layout.slices, layout.n_coef, layout.n_hazard
    batch = u.shape[:-1]
    log_tau = u[..., s["log_tau"]]
    log_tau_g = u[..., s["log_tau_gamma"]]
    log_jac = log_tau.sum(-1) + log_tau_g.sum(-1)
    kw = {}
    if layout.spec.proportional_hazards:
        kw["log_phi"] = u[..., s["log_phi"]][..., 0]
    else:
        z_mu, z_tau = u[..., s["z_rho_mu"]], u[..., s["z_rho_tau"]]
        kw["rho_mu"], kw["rho_tau"] = np.tanh(z_mu), np.tanh(z_tau)
        log_jac = log_jac + _log_sech2(z_mu).sum(-1) + _log_sech2(z_tau).sum(-1)
    state = ParameterState(
        beta=u[..., s["beta"]].reshape(batch + (h, q)),
        gamma=u[..., s["gamma"]].reshape(batch + (2, q)),
        mu=u[..., s["mu"]],
        mu_gamma=u[..., s["mu_gamma"]],
        tau=np.exp(log_tau),
        tau_gamma=np.exp(log_tau_g),
        **kw,
    )
    return state, log_jac


def to_unconstrained(state: ParameterState, layout: Layout) -> np.ndarray:
    parts = [
        state.beta.reshape(state.beta.shape[:-2] + (-1,)),
        state.gamma.reshape(state.gamma.shape[:-2] + (-1,)),
        state.mu,
        state.mu_gamma,
        np.log(state.tau),
        np.log(state.tau_gamma),
    ]
    if layout.spec.proportional_hazards:
        parts.append(np.asarray(state.log_phi)[..., None])
    else:
        parts += [np.arctanh(state.rho_mu), np.arctanh(state.rho_tau)]
    return np.concatenate(parts, axis=-1)


def cell_params(state: ParameterState, design: DesignMatrices, spec: ModelSpec) -> CellParams:
    haz = state.beta @ design.X.T  # (..., h, G)
    if spec.proportional_hazards:
        log_phi = np.asarray(state.log_phi)[..., None, None]
        log_lam = np.stack([haz, haz + log_phi], axis=-2)  # (..., a, w, G)
    else:
        log_lam = haz.reshape(haz.shape[:-2] + (2, 2, haz.shape[-1]))
    return CellParams(log_lam, state.gamma @ design.Z.T)


class LikelihoodTerms:
    """Data-dependent constants of the Poisson and binomial log-likelihoods."""

    def __init__(self, table: SummaryTable):
        self.D = table.D.astype(float)
        self.U = table.U
        self.V = table.V.astype(float)
        self.n = table.n.astype(float)
        with np.errstate(divide="ignore"):
            log_U = np.where(self.U > 0, np.log(np.where(self.U > 0, self.U, 1.0)), 0.0)
        # D log(lam U) - lam U - log D! = D log lam - lam U + [D log U - log D!]
        self.poisson_const = self.D * log_U - gammaln(self.D + 1)
        self.binom_const = gammaln(self.n + 1) - gammaln(self.V + 1) - gammaln(self.n - self.V + 1)

    def cells(self, cp: CellParams) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell log-likelihood contributions ``(poisson[...,2,2,G], binom[...,2,G])``."""
        poisson = self.D * cp.log_lam - np.exp(cp.log_lam) * self.U + self.poisson_const
        binom = self.V * log_expit(cp.logit_p) + (self.n - self.V) * log_expit(-cp.logit_p) + self.binom_const
        return poisson, binom

    def total(self, cp: CellParams) -> np.ndarray:
        poisson, binom = self.cells(cp)
        return poisson.sum(axis=(-3, -2, -1)) + binom.sum(axis=(-2, -1))


def log_likelihood(state: ParameterState, table: SummaryTable, design: DesignMatrices, spec: ModelSpec):
    return LikelihoodTerms(table).total(cell_params(state, design, spec))


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * (LOG_2PI + z * z) - np.log(sd)


def _bvn_logpdf(x0, x1, mean, sd, rho):
    """Bivariate normal with equal marginal scales ``sd`` and correlation ``rho``."""
    z0, z1 = (x0 - mean) / sd, (x1 - mean) / sd
    one_m = 1.0 - rho * rho
    return -LOG_2PI - 2.0 * np.log(sd) - 0.5 * np.log(one_m) - (z0 * z0 - 2.0 * rho * z0 * z1 + z1 * z1) / (2.0 * one_m)


def log_prior(state: ParameterState, hp: Hyperparams, spec: ModelSpec, has_intercept: bool):
    """Log prior density of the constrained parameters (spreads as lognormals)."""
    start = 1 if has_intercept else 0
    h = state.beta.shape[-2]
    arm_of = np.array([0, 1]) if h == 2 else np.array([0, 0, 1, 1])

    lp = _normal_logpdf(state.beta[..., start:], state.mu[..., None], state.tau[..., None]).sum(axis=(-2, -1))
    lp = lp + _normal_logpdf(state.gamma[..., start:], state.mu_gamma[..., None],
                             state.tau_gamma[..., None]).sum(axis=(-2, -1))
    if has_intercept:
        lp = lp + _normal_logpdf(state.beta[..., 0], 0.0, hp.sigma_intercept_beta).sum(-1)
        lp = lp + _normal_logpdf(state.gamma[..., 0], 0.0, hp.sigma_intercept_gamma).sum(-1)

    log_tau = np.log(state.tau)
    if spec.proportional_hazards:
        lp = lp + _normal_logpdf(state.mu, 0.0, hp.sigma_mu[arm_of]).sum(-1)
        lp = lp + _normal_logpdf(log_tau, LOG_HALF, hp.sigma_tau[arm_of]).sum(-1)
        lp = lp + _normal_logpdf(state.log_phi, 0.0, hp.sigma_log_phi)
    else:
        mu = state.mu.reshape(state.mu.shape[:-1] + (2, 2))
        lt = log_tau.reshape(log_tau.shape[:-1] + (2, 2))
        lp = lp + _bvn_logpdf(mu[..., 0], mu[..., 1], 0.0, hp.sigma_mu, state.rho_mu).sum(-1)
        lp = lp + _bvn_logpdf(lt[..., 0], lt[..., 1], LOG_HALF, hp.sigma_tau, state.rho_tau).sum(-1)
        lp = lp + 4 * np.log(0.5)
    lp = lp - log_tau.sum(-1)

    lp = lp + _normal_logpdf(state.mu_gamma, LOG_HALF, hp.sigma_mu_gamma).sum(-1)
    lp = lp + _normal_logpdf(np.log(state.tau_gamma), 0.0, hp.sigma_tau_gamma).sum(-1)
    lp = lp - np.log(state.tau_gamma).sum(-1)
    return lp


def _shift_move(coef, mean):
    def move(x, step):
        y = x.copy()
        y[coef] += step
        y[mean] += step
        return y, 0.0
    return move


def _scale_move(coef, mean, log_sd):
    def move(x, step):
        y = x.copy()
        y[coef] = x[mean] + (x[coef] - x[mean]) * np.exp(step)
        y[log_sd] += step
        return y, len(coef) * step
    return move


class Posterior:
    """Log posterior on the unconstrained scale for one table and model."""

    def __init__(self, table: SummaryTable, design: DesignMatrices, spec: ModelSpec,
                 hyperparams: Hyperparams | None = None):
        self.table = table
        self.design = design
        self.spec = spec
        self.hyperparams = hyperparams or Hyperparams()
        self.layout = Layout.build(spec, design)
        self.terms = LikelihoodTerms(table)
        hp, T = self.hyperparams, self.terms
        ph = spec.proportional_hazards
        self._kernel_args = (
            _kernel.offsets(self.layout.slices, ph), self.layout.n_hazard, self.layout.n_coef,
            1 if design.has_intercept else 0, ph,
            np.ascontiguousarray(design.X, dtype=float), np.ascontiguousarray(design.Z, dtype=float),
            T.D, T.U, T.poisson_const, T.V, T.n, T.binom_const,
            hp.sigma_mu, hp.sigma_tau, hp.sigma_mu_gamma, hp.sigma_tau_gamma,
            hp.sigma_intercept_beta, hp.sigma_intercept_gamma, hp.sigma_log_phi,
        )

    @property
    def dim(self) -> int:
        return self.layout.dim

    def blocks(self) -> list[np.ndarray]:
        return self.layout.blocks()

    def moves(self) -> list:
        """Joint proposals along the hierarchy: translate a coefficient layer
        with its mean, or rescale its deviations together with its spread.

        Each move maps ``(x, step)`` to ``(proposal, log Jacobian)``.
        """
        s, q = self.layout.slices, self.layout.n_coef
        start = 1 if self.design.has_intercept else 0
        idx = np.arange(self.dim)
        out = []
        groups = [(idx[s["beta"]][k * q + start:(k + 1) * q], idx[s["mu"]][k], idx[s["log_tau"]][k])
                  for k in range(self.layout.n_hazard)]
        groups += [(idx[s["gamma"]][a * q + start:(a + 1) * q], idx[s["mu_gamma"]][a], idx[s["log_tau_gamma"]][a])
                   for a in (0, 1)]
        for coef, mean, log_sd in groups:
            out.append(_shift_move(coef, mean))
            out.append(_scale_move(coef, mean, log_sd))
        return out

    def constrain(self, u) -> tuple[ParameterState, np.ndarray]:
        return to_constrained(u, self.layout)

    def cell_params(self, u) -> CellParams:
        state, _ = to_constrained(u, self.layout)
        return cell_params(state, self.design, self.spec)

    def loglik_cells(self, u) -> tuple[np.ndarray, np.ndarray]:
        return self.terms.cells(self.cell_params(u))

    def log_likelihood(self, u):
        return self.terms.total(self.cell_params(u))

    def log_density(self, u):
        """Log posterior up to a constant, including the Jacobian term.

        Returns ``-inf`` where the density underflows or overflows; raises
        on non-finite input.
        """
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise ValueError("unconstrained parameters must be finite")
        state, log_jac = to_constrained(u, self.layout)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            cp = cell_params(state, self.design, self.spec)
            lp = (self.terms.total(cp)
                  + log_prior(state, self.hyperparams, self.spec, self.design.has_intercept)
                  + log_jac)
        lp = np.where(np.isnan(lp), -np.inf, lp)
        return float(lp) if lp.ndim == 0 else lp

    def log_density_and_grad(self, u) -> tuple[float, np.ndarray]:
        """Log posterior and its gradient for a single unconstrained vector."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise ValueError(f"expected shape ({self.dim},), got {u.shape}")
        if not math.isfinite(u.sum()):
            raise ValueError("unconstrained parameters must be finite")
        grad = np.empty(self.dim)
        lp = _kernel.log_density_and_grad(u, *self._kernel_args, grad)
        if not (math.isfinite(lp) and math.isfinite(grad.sum())):
            return -np.inf, np.zeros(self.dim)
        return float(lp), grad

    def initial_point(self, rng: np.random.Generator, jitter: float = 0.5) -> np.ndarray:
        """Crude data-informed start, jittered uniformly by ``+-jitter``.

        Baseline coefficients start at the log pooled event rate (hazards)
        and logit pooled AE rate; contrasts at zero; spreads at 1/2 and
        correlations at zero.
        """
        t, s, q = self.table, self.layout.slices, self.layout.n_coef
        rate = (t.D.sum() + 0.5) / (t.U.sum() + 1.0)
        ae = (t.V.sum() + 0.5) / (t.n.sum() + 1.0)
        log_rate, logit_ae = np.log(rate), np.log(ae / (1 - ae))
        h = self.layout.n_hazard
        beta = np.zeros((h, q))
        gamma = np.zeros((2, q))
        if self.design.has_intercept:
            beta[:, 0], gamma[:, 0] = log_rate, logit_ae
            mu, mu_g = np.zeros(h), np.zeros(2)
        else:
            beta[:], gamma[:] = log_rate, logit_ae
            mu, mu_g = np.full(h, log_rate), np.full(2, logit_ae)
        state = ParameterState(
            beta=beta, gamma=gamma, mu=mu, mu_gamma=mu_g,
            tau=np.full(h, 0.5), tau_gamma=np.full(2, 0.5),
            rho_mu=None if self.spec.proportional_hazards else np.zeros(2),
            rho_tau=None if self.spec.proportional_hazards else np.zeros(2),
            log_phi=0.0 if self.spec.proportional_hazards else None,
        )
        u = to_unconstrained(state, self.layout)
        return u + rng.uniform(-jitter, jitter, size=u.shape)


__all__ = [
    "Hyperparams", "Layout", "ParameterState", "CellParams", "Posterior", "LikelihoodTerms",
    "to_constrained", "to_unconstrained", "cell_params", "log_likelihood", "log_prior",
]
