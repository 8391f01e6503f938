"""Compiled log posterior and gradient for a single unconstrained vector."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
LOG_HALF = math.log(0.5)

# offsets into the unconstrained vector, in this order
BETA, GAMMA, MU, MU_G, LOG_TAU, LOG_TAU_G, EXTRA = range(7)


@njit(cache=True)
def _log_expit(z):
    if z >= 0.0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


@njit(cache=True)
def _log_sech2(z):
    az = abs(z)
    return 2.0 * (math.log(2.0) - az - math.log1p(math.exp(-2.0 * az)))


@njit(cache=True)
def _normal(x, mean, sd, grad, i):
    z = (x - mean) / sd
    grad[i] -= z / sd
    return -0.5 * (LOG_2PI + z * z) - math.log(sd)


@njit(cache=True)
def log_density_and_grad(u, off, h, q, start, ph, X, Z, D, U, pconst, V, n, bconst,
                         s_mu, s_tau, s_mu_g, s_tau_g, s_int_b, s_int_g, s_log_phi, grad):
    """Fill ``grad`` and return the log posterior (Jacobian included)."""
    G = X.shape[0]
    grad[:] = 0.0
    lp = 0.0
    b0, c0 = off[BETA], off[GAMMA]
    log_phi = u[off[EXTRA]] if ph else 0.0

    # Poisson cells
    for k in range(h):
        for g in range(G):
            eta = 0.0
            for j in range(q):
                eta += u[b0 + k * q + j] * X[g, j]
            n_w = 2 if ph else 1
            for ww in range(n_w):
                if ph:
                    a, w = k, ww
                    ll = eta + (log_phi if ww == 1 else 0.0)
                else:
                    a, w = k // 2, k % 2
                    ll = eta
                lam_u = math.exp(ll) * U[a, w, g]
                lp += D[a, w, g] * ll - lam_u + pconst[a, w, g]
                r = D[a, w, g] - lam_u
                for j in range(q):
                    grad[b0 + k * q + j] += r * X[g, j]
                if ph and ww == 1:
                    grad[off[EXTRA]] += r

    # binomial cells
    for a in range(2):
        for g in range(G):
            z = 0.0
            for j in range(q):
                z += u[c0 + a * q + j] * Z[g, j]
            le_pos, le_neg = _log_expit(z), _log_expit(-z)
            lp += V[a, g] * le_pos + (n[a, g] - V[a, g]) * le_neg + bconst[a, g]
            r = V[a, g] - n[a, g] * math.exp(le_pos)
            for j in range(q):
                grad[c0 + a * q + j] += r * Z[g, j]

    # coefficient layers given their means and spreads
    for layer in range(2):
        base = b0 if layer == 0 else c0
        m0 = off[MU] if layer == 0 else off[MU_G]
        s0 = off[LOG_TAU] if layer == 0 else off[LOG_TAU_G]
        rows = h if layer == 0 else 2
        for k in range(rows):
            m, ls = u[m0 + k], u[s0 + k]
            inv_var = math.exp(-2.0 * ls)
            for j in range(start, q):
                dev = u[base + k * q + j] - m
                zsq = dev * dev * inv_var
                lp += -0.5 * (LOG_2PI + zsq) - ls
                grad[base + k * q + j] -= dev * inv_var
                grad[m0 + k] += dev * inv_var
                grad[s0 + k] += zsq - 1.0
        if start == 1:
            sd = s_int_b if layer == 0 else s_int_g
            for k in range(rows):
                lp += _normal(u[base + k * q], 0.0, sd, grad, base + k * q)

    for a in range(2):
        lp += _normal(u[off[MU_G] + a], LOG_HALF, s_mu_g[a], grad, off[MU_G] + a)
        lp += _normal(u[off[LOG_TAU_G] + a], 0.0, s_tau_g[a], grad, off[LOG_TAU_G] + a)

    if ph:
        for a in range(2):
            lp += _normal(u[off[MU] + a], 0.0, s_mu[a], grad, off[MU] + a)
            lp += _normal(u[off[LOG_TAU] + a], LOG_HALF, s_tau[a], grad, off[LOG_TAU] + a)
        lp += _normal(log_phi, 0.0, s_log_phi, grad, off[EXTRA])
    else:
        for pair in range(2):
            v0 = off[MU] if pair == 0 else off[LOG_TAU]
            mean = 0.0 if pair == 0 else LOG_HALF
            for a in range(2):
                sd = s_mu[a] if pair == 0 else s_tau[a]
                zi = off[EXTRA] + 2 * pair + a
                z = u[zi]
                rho = math.tanh(z)
                ls2 = _log_sech2(z)
                one_m = math.exp(ls2)
                x0 = (u[v0 + 2 * a] - mean) / sd
                x1 = (u[v0 + 2 * a + 1] - mean) / sd
                Q = x0 * x0 - 2.0 * rho * x0 * x1 + x1 * x1
                # bivariate normal, uniform prior on rho, and the tanh Jacobian
                lp += -LOG_2PI - 2.0 * math.log(sd) - 0.5 * ls2 - Q / (2.0 * one_m) + ls2 + LOG_HALF
                grad[v0 + 2 * a] -= (x0 - rho * x1) / (sd * one_m)
                grad[v0 + 2 * a + 1] -= (x1 - rho * x0) / (sd * one_m)
                grad[zi] += rho + x0 * x1 - Q * rho / one_m - 2.0 * rho
    return lp


def offsets(slices: dict, proportional_hazards: bool) -> np.ndarray:
    extra = slices["log_phi"].start if proportional_hazards else slices["z_rho_mu"].start
    names = ("beta", "gamma", "mu", "mu_gamma", "log_tau", "log_tau_gamma")
    return np.array([slices[k].start for k in names] + [extra], dtype=np.int64)
