import warnings

import numpy as np
import pytest

from bivariate_subgroup.sampler import (ChainConfig, DrawSet, LogDensity, SamplingError,
                                        diagnose, effective_sample_size, run_chains, split_rhat)


def _normal_target(dim=1, cov=None):
    cov = np.eye(dim) if cov is None else np.asarray(cov)
    prec = np.linalg.inv(cov)

    def fn(u):
        return -0.5 * float(u @ prec @ u)

    def grad(u):
        g = -prec @ u
        return -0.5 * float(u @ prec @ u), g

    return LogDensity(fn, dim, grad=grad)


@pytest.mark.parametrize("algorithm", ["nuts", "rwm"])
class TestTargets:
    def test_standard_normal(self, algorithm):
        ds = run_chains(_normal_target(), ChainConfig(seed=1, algorithm=algorithm))
        x = ds.flat()[:, 0]
        ess = effective_sample_size(ds.draws[:, :, 0])
        assert abs(x.mean()) < 4 / np.sqrt(ess)
        assert x.var() == pytest.approx(1.0, rel=0.1)
        assert ds.draws.shape == (4, 1000, 1)

    def test_correlated_normal_moments(self, algorithm):
        cov = np.array([[1.0, 0.8], [0.8, 2.0]])
        ds = run_chains(_normal_target(2, cov), ChainConfig(seed=2, algorithm=algorithm, iterations=3000,
                                                             warmup=1000))
        x = ds.flat()
        ess = min(effective_sample_size(ds.draws[:, :, j]) for j in range(2))
        se_mean = np.sqrt(np.diag(cov) / ess)
        assert np.all(np.abs(x.mean(0)) < 4 * se_mean)
        np.testing.assert_allclose(np.cov(x, rowvar=False), cov, rtol=0.15, atol=0.1)

    def test_deterministic(self, algorithm):
        cfg = ChainConfig(chains=2, iterations=300, warmup=100, seed=5, algorithm=algorithm)
        a = run_chains(_normal_target(3), cfg)
        b = run_chains(_normal_target(3), cfg)
        assert a.digest() == b.digest()
        c = run_chains(_normal_target(3), ChainConfig(chains=2, iterations=300, warmup=100, seed=6,
                                                       algorithm=algorithm))
        assert a.digest() != c.digest()


class TestConjugate:
    def test_gamma_poisson(self):
        a0, b0, D, U = 2.0, 1.0, 7, 3.5

        def fn(u):
            lam = np.exp(u[0])
            return (a0 + D) * u[0] - (b0 + U) * lam

        def grad(u):
            lam = np.exp(u[0])
            return fn(u), np.array([(a0 + D) - (b0 + U) * lam])

        ds = run_chains(LogDensity(fn, 1, grad=grad), ChainConfig(seed=3))
        lam = np.exp(ds.draws[:, :, 0])
        a, b = a0 + D, b0 + U
        ess = effective_sample_size(lam)
        assert abs(lam.mean() - a / b) < 3 * lam.std() / np.sqrt(ess)
        dev2 = (lam - lam.mean()) ** 2
        assert abs(dev2.mean() - a / b**2) < 3 * dev2.std() / np.sqrt(effective_sample_size(dev2))


class TestConfig:
    def test_defaults(self):
        cfg = ChainConfig()
        assert (cfg.chains, cfg.iterations, cfg.warmup, cfg.kept) == (4, 1500, 500, 1000)
        assert cfg.target_accept == 0.8

    @pytest.mark.parametrize("kw", [dict(warmup=1500), dict(chains=0), dict(target_accept=1.0),
                                    dict(algorithm="hmc"), dict(seed=-1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ChainConfig(**kw)

    def test_chain_seeds_distinct(self):
        cfg = ChainConfig(seed=12)
        assert len({cfg.chain_seed(c) for c in range(4)}) == 4


class TestErrors:
    def test_nonfinite_everywhere(self):
        target = LogDensity(lambda u: -np.inf, 2, grad=lambda u: (-np.inf, np.zeros(2)))
        with pytest.raises(SamplingError):
            run_chains(target, ChainConfig(chains=1, iterations=10, warmup=5))

    def test_nuts_needs_gradient(self):
        target = LogDensity(lambda u: -0.5 * float(u @ u), 2)
        with pytest.raises(SamplingError):
            run_chains(target, ChainConfig(chains=1, iterations=10, warmup=5))
        run_chains(target, ChainConfig(chains=1, iterations=10, warmup=5, algorithm="rwm"))


class TestDrawSet:
    def test_save_load(self, tmp_path):
        ds = run_chains(_normal_target(2), ChainConfig(chains=2, iterations=200, warmup=100, seed=4),
                        names=["a", "b"], meta={"k": 1})
        path = tmp_path / "d.jsonl"
        ds.save(path)
        back = DrawSet.load(path)
        assert back.digest() == ds.digest()
        np.testing.assert_array_equal(back.draws, ds.draws)
        assert back.names == ["a", "b"] and back.meta == {"k": 1}

    def test_truncated_file(self, tmp_path):
        ds = run_chains(_normal_target(1), ChainConfig(chains=2, iterations=50, warmup=10, seed=4))
        path = tmp_path / "d.jsonl"
        ds.save(path)
        path.write_text("".join(path.read_text().splitlines(keepends=True)[:-3]))
        with pytest.raises(ValueError, match="truncated"):
            DrawSet.load(path)

    def test_not_a_draw_file(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text('{"format": "other"}\n')
        with pytest.raises(ValueError):
            DrawSet.load(path)


class TestDiagnostics:
    def test_rhat_iid(self):
        x = np.random.default_rng(0).normal(size=(2, 5000))
        assert 0.99 <= split_rhat(x) <= 1.02

    def test_rhat_distinct_constants(self):
        x = np.stack([np.full(100, 1.0), np.full(100, 2.0)])
        assert split_rhat(x) > 10

    def test_rhat_constant_undefined(self):
        assert np.isnan(split_rhat(np.ones((2, 100))))

    def test_rhat_detects_shift(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 500))
        x[0] += 3
        assert split_rhat(x) > 1.1

    def test_rhat_too_few(self):
        with pytest.raises(ValueError):
            split_rhat(np.ones((2, 3)))

    def test_ess_iid(self):
        x = np.random.default_rng(2).normal(size=(1, 4000))
        assert effective_sample_size(x) == pytest.approx(4000, rel=0.15)

    def test_ess_ar1(self):
        rng = np.random.default_rng(3)
        n, phi = 4000, 0.9
        x = np.empty(n)
        x[0] = rng.normal()
        for t in range(1, n):
            x[t] = phi * x[t - 1] + rng.normal() * np.sqrt(1 - phi**2)
        assert effective_sample_size(x) == pytest.approx(n * (1 - phi) / (1 + phi), rel=0.25)

    def test_ess_clipped(self):
        # antithetic draws would give ESS above n without clipping
        x = np.tile([1.0, -1.0], 500) + np.random.default_rng(4).normal(scale=0.01, size=1000)
        assert effective_sample_size(x) <= 1000

    def test_ess_constant(self):
        assert np.isnan(effective_sample_size(np.ones(100)))

    def test_report(self):
        ds = run_chains(_normal_target(2), ChainConfig(seed=7, iterations=600, warmup=300))
        rep = diagnose(ds)
        assert rep.converged and rep.max_rhat < 1.05
        d = rep.to_dict()
        assert d["converged"] and len(d["coordinates"]) == 2

    def test_stuck_warning(self):
        ds = run_chains(_normal_target(1), ChainConfig(chains=2, iterations=100, warmup=50, seed=8))
        ds.acceptance[:] = 0.0
        with pytest.warns(RuntimeWarning, match="acceptance"):
            rep = diagnose(ds)
        assert not rep.converged and rep.stuck
