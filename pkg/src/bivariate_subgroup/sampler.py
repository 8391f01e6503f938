"""Multi-chain MCMC for the subgroup posterior, with convergence diagnostics.

Two kernels share one contract (``run_chains``):

``nuts``
    No-U-turn Hamiltonian Monte Carlo with multinomial trajectory sampling,
    a diagonal metric estimated in expanding warmup windows and a step size
    tuned by dual averaging. Needs ``log_density_and_grad``.
``rwm``
    Blockwise adaptive random-walk Metropolis. Each block has a Gaussian
    proposal whose covariance is re-estimated from warmup history and whose
    scale is tuned by Robbins-Monro; optional joint moves supplied by the
    target are interleaved.

All adaptation stops at the end of warmup, so kept draws come from a fixed
kernel. Chain ``c`` uses its own generator seeded with ``seed ^ c``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DRAWS_FORMAT = "bivariate-subgroup-draws"
DRAWS_VERSION = 1
MAX_INIT_ATTEMPTS = 100
STUCK_ACCEPTANCE = 0.01
DIVERGENCE_THRESHOLD = 1000.0
ALGORITHMS = ("nuts", "rwm")
DEFAULT_TARGET_ACCEPT = {"nuts": 0.8, "rwm": 0.3}


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainConfig:
    chains: int = 4
    iterations: int = 1500
    warmup: int = 500
    seed: int = 0
    target_accept: float | None = None
    algorithm: str = "nuts"
    max_depth: int = 10

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.target_accept is None:
            object.__setattr__(self, "target_accept", DEFAULT_TARGET_ACCEPT[self.algorithm])
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0 <= self.warmup < self.iterations:
            raise ValueError(f"warmup ({self.warmup}) must be < iterations ({self.iterations})")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    @property
    def kept(self) -> int:
        return self.iterations - self.warmup

    def chain_seed(self, chain: int) -> int:
        return self.seed ^ chain


class LogDensity:
    """Adapter turning plain callables into a sampler target.

    ``fn`` returns the log density; ``grad`` (optional) returns
    ``(log density, gradient)`` and enables the ``nuts`` kernel.
    """

    def __init__(self, fn: Callable[[np.ndarray], float], dim: int,
                 grad: Callable[[np.ndarray], tuple[float, np.ndarray]] | None = None,
                 init: Callable[[np.random.Generator], np.ndarray] | None = None,
                 blocks: Sequence[Sequence[int]] | None = None):
        self.fn = fn
        self.dim = dim
        self._grad = grad
        self._init = init
        self._blocks = blocks

    def log_density(self, u):
        return self.fn(u)

    def log_density_and_grad(self, u):
        if self._grad is None:
            raise SamplingError("this target has no gradient; use algorithm='rwm'")
        return self._grad(u)

    @property
    def has_gradient(self) -> bool:
        return self._grad is not None

    def blocks(self):
        if self._blocks is None:
            return [np.arange(self.dim)]
        return [np.asarray(b) for b in self._blocks]

    def initial_point(self, rng):
        if self._init is None:
            return rng.uniform(-1, 1, size=self.dim)
        return np.asarray(self._init(rng), dtype=float)


@dataclass(eq=False)
class DrawSet:
    """Post-warmup draws on the unconstrained scale.

    ``draws`` has shape (chains, kept, dim) and ``lp`` (chains, kept).
    ``acceptance`` holds post-warmup acceptance rates per (chain, block);
    the ``nuts`` kernel reports a single block (mean acceptance statistic).
    ``stats`` carries per-chain kernel details (step size, divergences).
    """

    draws: np.ndarray
    lp: np.ndarray
    acceptance: np.ndarray
    config: ChainConfig
    names: list[str]
    meta: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0] * self.draws.shape[1]

    @property
    def dim(self) -> int:
        return self.draws.shape[2]

    def flat(self) -> np.ndarray:
        """Draws as (chains * kept, dim), chain-major."""
        return self.draws.reshape(-1, self.dim)

    def header(self) -> dict:
        return {
            "format": DRAWS_FORMAT,
            "version": DRAWS_VERSION,
            "config": asdict(self.config),
            "names": list(self.names),
            "shape": list(self.draws.shape),
            "acceptance": self.acceptance.tolist(),
            "stats": self.stats,
            "meta": self.meta,
        }

    def iter_lines(self):
        yield json.dumps(self.header(), sort_keys=True)
        for c in range(self.draws.shape[0]):
            for i in range(self.draws.shape[1]):
                yield json.dumps({"chain": c, "iteration": i, "lp": float(self.lp[c, i]),
                                  "u": self.draws[c, i].tolist()})

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for line in self.iter_lines():
                fh.write(line + "\n")

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.iter_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    @classmethod
    def load(cls, path: str | Path) -> "DrawSet":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("format") != DRAWS_FORMAT:
                raise ValueError(f"{path} is not a draw file")
            if header.get("version") != DRAWS_VERSION:
                raise ValueError(f"unsupported draw file version {header.get('version')!r}")
            c, k, d = header["shape"]
            draws = np.empty((c, k, d))
            lp = np.empty((c, k))
            count = 0
            for line in fh:
                rec = json.loads(line)
                draws[rec["chain"], rec["iteration"]] = rec["u"]
                lp[rec["chain"], rec["iteration"]] = rec["lp"]
                count += 1
        if count != c * k:
            raise ValueError(f"draw file is truncated: {count} of {c * k} draws")
        return cls(draws, lp, np.array(header["acceptance"]), ChainConfig(**header["config"]),
                   header["names"], header["meta"], header.get("stats", {}))


def _find_start(target, rng) -> tuple[np.ndarray, float]:
    for _ in range(MAX_INIT_ATTEMPTS):
        x = np.asarray(target.initial_point(rng), dtype=float)
        if x.shape != (target.dim,):
            raise ValueError(f"initial point has shape {x.shape}, expected ({target.dim},)")
        lp = target.log_density(x)
        if np.isfinite(lp):
            return x, float(lp)
    raise SamplingError(f"log density not finite at {MAX_INIT_ATTEMPTS} initialisation attempts")


# ---------------------------------------------------------------------------
# random-walk Metropolis

def _adapt_points(warmup: int) -> set[int]:
    # covariance re-estimated at 1/5 .. 4/5 of warmup; the last fifth only tunes scale
    return {warmup * k // 5 for k in range(1, 5) if warmup * k // 5 >= 20}


def _rwm_chain(target, cfg: ChainConfig, chain: int):
    blocks = target.blocks() if hasattr(target, "blocks") else [np.arange(target.dim)]
    covered = np.sort(np.concatenate(blocks))
    if not np.array_equal(covered, np.arange(target.dim)):
        raise ValueError("blocks must partition the coordinates")
    moves = target.moves() if hasattr(target, "moves") else []

    rng = np.random.default_rng(cfg.chain_seed(chain))
    x, lp = _find_start(target, rng)
    n_blocks = len(blocks)
    chols = [0.1 * np.eye(len(b)) for b in blocks]
    log_scale = np.zeros(n_blocks)
    move_scale = np.full(len(moves), np.log(0.1))
    adapt_at = _adapt_points(cfg.warmup)

    out = np.empty((cfg.kept, target.dim))
    out_lp = np.empty(cfg.kept)
    warm_hist = np.empty((cfg.warmup, target.dim))
    accepted = np.zeros(n_blocks)

    for t in range(cfg.iterations):
        warm = t < cfg.warmup
        for b, idx in enumerate(blocks):
            z = rng.standard_normal(len(idx))
            prop = x.copy()
            prop[idx] += np.exp(log_scale[b]) * (chols[b] @ z)
            lp_prop = target.log_density(prop)
            log_ratio = lp_prop - lp if np.isfinite(lp_prop) else -np.inf
            acc = bool(np.log(rng.uniform()) < log_ratio)
            if warm:
                alpha = np.exp(min(0.0, log_ratio))
                log_scale[b] += (alpha - cfg.target_accept) / (t + 1) ** 0.6
            else:
                accepted[b] += acc
            if acc:
                x, lp = prop, float(lp_prop)
        for m, move in enumerate(moves):
            prop, log_jac = move(x, np.exp(move_scale[m]) * rng.standard_normal())
            lp_prop = target.log_density(prop)
            log_ratio = lp_prop - lp + log_jac if np.isfinite(lp_prop) else -np.inf
            if warm:
                move_scale[m] += (np.exp(min(0.0, log_ratio)) - cfg.target_accept) / (t + 1) ** 0.6
            if np.log(rng.uniform()) < log_ratio:
                x, lp = prop, float(lp_prop)
        if warm:
            warm_hist[t] = x
            if t + 1 in adapt_at:
                lo = (t + 1) // 2
                for b, idx in enumerate(blocks):
                    hist = warm_hist[lo:t + 1][:, idx]
                    d = len(idx)
                    cov = np.atleast_2d(np.cov(hist, rowvar=False))
                    cov += np.eye(d) * (1e-8 + 1e-6 * np.mean(np.diag(cov)))
                    try:
                        chols[b] = np.linalg.cholesky(cov * 2.38**2 / d)
                        log_scale[b] = 0.0
                    except np.linalg.LinAlgError:
                        logger.debug("chain %d block %d: covariance not positive definite", chain, b)
        else:
            out[t - cfg.warmup] = x
            out_lp[t - cfg.warmup] = lp
    return out, out_lp, accepted / cfg.kept, {}


# ---------------------------------------------------------------------------
# no-U-turn sampler

@dataclass
class _Point:
    x: np.ndarray
    r: np.ndarray
    lp: float
    grad: np.ndarray


@dataclass
class _Tree:
    first: _Point  # earliest state in build order
    last: _Point  # latest state in build order, the new trajectory edge
    sample: _Point
    log_w: float
    rho: np.ndarray  # sum of momenta over the subtree
    ok: bool
    sum_accept: float
    n_leapfrog: int


class _Nuts:
    def __init__(self, target, minv: np.ndarray, max_depth: int, rng: np.random.Generator):
        self.target = target
        self.minv = minv
        self.max_depth = max_depth
        self.rng = rng
        self.divergent = False

    def kinetic(self, r):
        return 0.5 * float(r @ (self.minv * r))

    def leapfrog(self, p: _Point, eps: float) -> _Point:
        r = p.r + 0.5 * eps * p.grad
        x = p.x + eps * self.minv * r
        if not math.isfinite(x.sum()):
            return _Point(x, r, -np.inf, np.zeros_like(x))
        lp, grad = self.target.log_density_and_grad(x)
        r = r + 0.5 * eps * grad
        return _Point(x, r, float(lp), grad)

    def no_uturn(self, rho, r_a, r_b) -> bool:
        return float(rho @ (self.minv * r_a)) > 0 and float(rho @ (self.minv * r_b)) > 0

    def build(self, p: _Point, eps: float, depth: int, H0: float) -> _Tree:
        if depth == 0:
            q = self.leapfrog(p, eps)
            H = q.lp - self.kinetic(q.r) if math.isfinite(q.lp) else -np.inf
            if math.isnan(H):
                H = -np.inf
            divergent = H0 - H > DIVERGENCE_THRESHOLD
            self.divergent |= divergent
            accept = math.exp(min(0.0, H - H0)) if H > -np.inf else 0.0
            return _Tree(q, q, q, H - H0, q.r.copy(), not divergent, accept, 1)
        a = self.build(p, eps, depth - 1, H0)
        if not a.ok:
            return a
        b = self.build(a.last, eps, depth - 1, H0)
        n = a.n_leapfrog + b.n_leapfrog
        acc = a.sum_accept + b.sum_accept
        if not b.ok:
            return _Tree(a.first, b.last, a.sample, a.log_w, a.rho, False, acc, n)
        log_w = np.logaddexp(a.log_w, b.log_w)
        sample = b.sample if math.log(self.rng.uniform()) < b.log_w - log_w else a.sample
        rho = a.rho + b.rho
        ok = (self.no_uturn(rho, a.first.r, b.last.r)
              and self.no_uturn(a.rho + b.first.r, a.first.r, b.first.r)
              and self.no_uturn(b.rho + a.last.r, a.last.r, b.last.r))
        return _Tree(a.first, b.last, sample, log_w, rho, ok, acc, n)

    def transition(self, x, lp, grad, eps):
        self.divergent = False
        r0 = self.rng.standard_normal(x.shape) / np.sqrt(self.minv)
        start = _Point(x, r0, lp, grad)
        H0 = lp - self.kinetic(r0)
        left = right = start
        sample, log_w = start, 0.0
        rho = r0.copy()
        sum_acc, n_leap, depth = 0.0, 0, 0
        while depth < self.max_depth:
            forward = self.rng.uniform() < 0.5
            edge = right if forward else left
            sub = self.build(edge, eps if forward else -eps, depth, H0)
            sum_acc += sub.sum_accept
            n_leap += sub.n_leapfrog
            if not sub.ok:
                break
            if forward:
                old_left, old_right = left, right
                right = sub.last
                inner_old, inner_new = old_right, sub.first
            else:
                old_left, old_right = left, right
                left = sub.last
                inner_old, inner_new = old_left, sub.first
            if math.log(self.rng.uniform()) < sub.log_w - log_w:
                sample = sub.sample
            log_w = np.logaddexp(log_w, sub.log_w)
            old_rho = rho
            rho = rho + sub.rho
            depth += 1
            if forward:
                cont = (self.no_uturn(rho, left.r, right.r)
                        and self.no_uturn(old_rho + inner_new.r, old_left.r, inner_new.r)
                        and self.no_uturn(sub.rho + inner_old.r, inner_old.r, right.r))
            else:
                cont = (self.no_uturn(rho, left.r, right.r)
                        and self.no_uturn(old_rho + inner_new.r, inner_new.r, old_right.r)
                        and self.no_uturn(sub.rho + inner_old.r, left.r, inner_old.r))
            if not cont:
                break
        return sample, sum_acc / max(n_leap, 1), depth, self.divergent


def _initial_step_size(nuts: _Nuts, x, lp, grad) -> float:
    eps = 1.0
    r = nuts.rng.standard_normal(x.shape) / np.sqrt(nuts.minv)
    H0 = lp - nuts.kinetic(r)

    def log_accept(e):
        q = nuts.leapfrog(_Point(x, r, lp, grad), e)
        H = q.lp - nuts.kinetic(q.r)
        return H - H0 if np.isfinite(H) else -np.inf

    direction = 1 if log_accept(eps) > math.log(0.8) else -1
    for _ in range(100):
        eps *= 2.0 ** direction
        la = log_accept(eps)
        if (direction == 1 and not la > math.log(0.8)) or (direction == -1 and la > math.log(0.8)):
            break
    return float(min(max(eps, 1e-8), 1e3))


class _DualAveraging:
    def __init__(self, eps: float, target: float):
        self.mu = math.log(10 * eps)
        self.target = target
        self.h_bar = 0.0
        self.log_eps = math.log(eps)
        self.log_eps_bar = 0.0
        self.m = 0

    def update(self, accept: float) -> float:
        self.m += 1
        m = self.m
        w = 1.0 / (m + 10)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept)
        self.log_eps = self.mu - math.sqrt(m) / 0.05 * self.h_bar
        k = m ** -0.75
        self.log_eps_bar = k * self.log_eps + (1 - k) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def _metric_windows(warmup: int) -> list[tuple[int, int]]:
    """Slow adaptation windows (start, end) as in the usual expanding schedule."""
    init, term, base = 75, 50, 25
    if init + term + base > warmup:
        init, term = int(0.15 * warmup), int(0.1 * warmup)
        base = warmup - init - term
    if base <= 0:
        return []
    end_slow = warmup - term
    windows, start, size = [], init, base
    while start < end_slow:
        end = start + size
        if end + 2 * size > end_slow:
            end = end_slow
        windows.append((start, end))
        start, size = end, 2 * size
    return windows


def _nuts_chain(target, cfg: ChainConfig, chain: int):
    rng = np.random.default_rng(cfg.chain_seed(chain))
    x, _ = _find_start(target, rng)
    lp, grad = target.log_density_and_grad(x)
    nuts = _Nuts(target, np.ones(target.dim), cfg.max_depth, rng)
    eps = _initial_step_size(nuts, x, lp, grad) if cfg.warmup else 1.0
    da = _DualAveraging(eps, cfg.target_accept)
    windows = {end: start for start, end in _metric_windows(cfg.warmup)}
    hist = np.empty((cfg.warmup, target.dim))

    out = np.empty((cfg.kept, target.dim))
    out_lp = np.empty(cfg.kept)
    accept_sum, divergences, depth_hits = 0.0, 0, 0

    for t in range(cfg.iterations):
        warm = t < cfg.warmup
        if t == cfg.warmup and cfg.warmup:
            eps = da.final
        p, accept, depth, divergent = nuts.transition(x, lp, grad, eps)
        x, lp, grad = p.x, p.lp, p.grad
        if warm:
            hist[t] = x
            eps = da.update(accept)
            if t + 1 in windows:
                w = hist[windows[t + 1]:t + 1]
                n = len(w)
                var = w.var(axis=0, ddof=1) if n > 1 else np.ones(target.dim)
                nuts.minv = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                eps = _initial_step_size(nuts, x, lp, grad)
                da = _DualAveraging(eps, cfg.target_accept)
        else:
            i = t - cfg.warmup
            out[i], out_lp[i] = x, lp
            accept_sum += accept
            divergences += divergent
            depth_hits += depth >= cfg.max_depth
    stats = {"step_size": float(eps), "divergences": int(divergences), "max_depth_hits": int(depth_hits)}
    return out, out_lp, np.array([accept_sum / cfg.kept]), stats


def run_chains(target, cfg: ChainConfig, names: Sequence[str] | None = None,
               meta: dict | None = None) -> DrawSet:
    """Run ``cfg.chains`` independent chains against ``target``.

    ``target`` needs ``dim`` and ``log_density(u)``; the ``nuts`` kernel
    also needs ``log_density_and_grad(u)``. ``blocks()``, ``moves()`` and
    ``initial_point(rng)`` are used when present.
    """
    if not hasattr(target, "initial_point"):
        target = LogDensity(
            target.log_density, target.dim,
            grad=getattr(target, "log_density_and_grad", None),
            blocks=target.blocks() if hasattr(target, "blocks") else None,
        )
    if cfg.algorithm == "nuts" and (not hasattr(target, "log_density_and_grad")
                                    or not getattr(target, "has_gradient", True)):
        raise SamplingError("the nuts kernel needs log_density_and_grad; use algorithm='rwm'")
    run = _nuts_chain if cfg.algorithm == "nuts" else _rwm_chain
    results = [run(target, cfg, c) for c in range(cfg.chains)]
    draws = np.stack([r[0] for r in results])
    lp = np.stack([r[1] for r in results])
    acceptance = np.stack([r[2] for r in results])
    stats = {"chains": [r[3] for r in results]} if cfg.algorithm == "nuts" else {}
    if names is None:
        names = [f"u[{i}]" for i in range(target.dim)]
    return DrawSet(draws, lp, acceptance, cfg, list(names), dict(meta or {}), stats)


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (chains, draws) or (draws,)")
    return x


def split_rhat(x) -> float:
    """Split-chain potential scale reduction for draws shaped (chains, draws).

    Returns ``nan`` when every draw is identical (undefined) and ``inf``
    when chains are individually constant but disagree.
    """
    x = _as_chains(x)
    m, n = x.shape
    if n < 4:
        raise ValueError("split R-hat needs at least 4 draws per chain")
    half = n // 2
    parts = np.concatenate([x[:, :half], x[:, n - half:]])
    means = parts.mean(axis=1)
    W = parts.var(axis=1, ddof=1).mean()
    B = half * means.var(ddof=1)
    if W == 0:
        return float("nan") if B == 0 else float("inf")
    var_plus = (half - 1) / half * W + B / half
    return float(np.sqrt(var_plus / W))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n]
    return ac / n


def effective_sample_size(x) -> float:
    """Multi-chain effective sample size with Geyer's initial positive sequence.

    The autocorrelation sum is truncated at the first negative sum of
    adjacent-lag pairs and made monotone; the result is capped at the total
    number of draws. Returns ``nan`` for a constant sequence.
    """
    x = _as_chains(x)
    m, n = x.shape
    if n < 4:
        raise ValueError("effective sample size needs at least 4 draws per chain")
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return float("nan")
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    total = m * n
    return float(min(total / tau, total)) if tau > 0 else float(total)


@dataclass
class ConvergenceReport:
    names: list[str]
    rhat: np.ndarray
    ess: np.ndarray
    rhat_lp: float
    ess_lp: float
    acceptance: np.ndarray
    stuck: list[tuple[int, int]]
    threshold: float = 1.05

    @property
    def max_rhat(self) -> float:
        vals = np.append(self.rhat, self.rhat_lp)
        vals = vals[~np.isnan(vals)]
        return float(vals.max()) if vals.size else float("nan")

    @property
    def undefined(self) -> list[str]:
        return [name for name, r in zip(self.names, self.rhat) if np.isnan(r)]

    @property
    def converged(self) -> bool:
        return bool(self.max_rhat <= self.threshold) and not self.stuck

    def to_dict(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)

        return {
            "converged": self.converged,
            "threshold": self.threshold,
            "max_rhat": clean(self.max_rhat),
            "min_ess": clean(np.nanmin(np.append(self.ess, self.ess_lp))),
            "lp": {"rhat": clean(self.rhat_lp), "ess": clean(self.ess_lp)},
            "coordinates": [
                {"name": nm, "rhat": clean(r), "ess": clean(e)}
                for nm, r, e in zip(self.names, self.rhat, self.ess)
            ],
            "acceptance": self.acceptance.tolist(),
            "stuck": [list(s) for s in self.stuck],
            "undefined": self.undefined,
        }


def diagnose(ds: DrawSet, threshold: float = 1.05) -> ConvergenceReport:
    rhat = np.array([split_rhat(ds.draws[:, :, j]) for j in range(ds.dim)])
    ess = np.array([effective_sample_size(ds.draws[:, :, j]) for j in range(ds.dim)])
    stuck = [(int(c), int(b)) for c, b in zip(*np.nonzero(ds.acceptance < STUCK_ACCEPTANCE))]
    if stuck:
        warnings.warn(f"post-warmup acceptance below {STUCK_ACCEPTANCE} for (chain, block) {stuck}",
                      RuntimeWarning, stacklevel=2)
    return ConvergenceReport(ds.names, rhat, ess, split_rhat(ds.lp), effective_sample_size(ds.lp),
                             ds.acceptance, stuck, threshold)
