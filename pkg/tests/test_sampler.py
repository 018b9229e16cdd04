"""HMC sampler: reproducibility, calibration oracles, pole classification."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from sipr.basis import build_orthonormal_basis
from sipr.errors import DivergentChains, TooFewSamples, ValidationError
from sipr.posterior import KnownNoise, UnknownNoise, build_density
from sipr.sampler import (
    Regime,
    SamplerConfig,
    detect_poles,
    posterior_moments,
    run_mcmc,
)
from tests.conftest import random_dataset


def make_density(n=10, eta=1.5, noise=None, seed=7):
    X, y = random_dataset(n, 1, seed=seed)
    basis = build_orthonormal_basis(X, eta)
    return build_density(basis, y, noise or KnownNoise(0.1))


SMALL = dict(chains=2, samples_per_chain=300, burn_in=100, seed=0)


class GaussianTarget:
    """Exact multivariate normal used as a calibration oracle."""

    def __init__(self, mu, cov):
        self.mu = np.asarray(mu, dtype=float)
        self.P = np.linalg.inv(np.asarray(cov, dtype=float))
        self.dim = self.mu.shape[0]

    def log_density(self, x):
        d = x - self.mu
        return -0.5 * float(d @ self.P @ d)

    def grad(self, x):
        return -self.P @ (x - self.mu)


class TestPosteriorMoments:
    def test_small_known_case(self):
        mean, cov = posterior_moments(np.array([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_allclose(mean, [2.0, 3.0])
        np.testing.assert_allclose(cov, [[1.0, 1.0], [1.0, 1.0]])  # 1/N, not 1/(N-1)

    def test_matches_two_pass_oracle(self, rng):
        S = rng.normal(size=(200, 4)) * [1.0, 3.0, 0.1, 10.0]
        mean, cov = posterior_moments(S)
        m = S.mean(axis=0)
        c = sum(np.outer(s - m, s - m) for s in S) / S.shape[0]
        np.testing.assert_allclose(mean, m, rtol=1e-12)
        np.testing.assert_allclose(cov, c, rtol=1e-10, atol=1e-12)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValidationError):
            posterior_moments(np.zeros(5))
        with pytest.raises(ValidationError):
            posterior_moments(np.zeros((0, 3)))


class TestDetectPoles:
    # Traces are per-chain; classification looks at each chain's last quarter.
    healthy = [np.full(100, 5.0), np.full(100, 4.0)]

    def test_normal(self):
        assert detect_poles(self.healthy, None, 5.0) == Regime.NORMAL

    def test_nullspace_collapse(self):
        collapsed = [np.full(100, 1e-6), np.full(100, 2e-6)]
        assert detect_poles(collapsed, None, 5.0) == Regime.NULLSPACE_POLE

    def test_single_collapsed_chain_is_enough(self):
        # Chains fall into a pole at different speeds; one on the pole
        # decides the regime even if the other still looks healthy.
        mixed = [np.full(100, 5.0), np.full(100, 1e-6)]
        assert detect_poles(mixed, None, 5.0) == Regime.NULLSPACE_POLE

    def test_only_tail_counts(self):
        # Early collapse followed by recovery is a transient, not a pole.
        trace = np.concatenate([np.full(75, 1e-8), np.full(25, 5.0)])
        assert detect_poles([trace], None, 5.0) == Regime.NORMAL

    def test_interpolation_collapse(self):
        sig = [np.full(100, 1e-6), np.full(100, 0.5)]
        assert detect_poles(self.healthy, sig, 5.0, y_sd=1.0) == Regime.INTERPOLATION_POLE

    def test_known_noise_cannot_hit_interpolation_pole(self):
        assert detect_poles(self.healthy, None, 5.0, y_sd=1.0) == Regime.NORMAL

    def test_nullspace_takes_precedence(self):
        collapsed = [np.full(100, 1e-6)]
        sig = [np.full(100, 1e-6)]
        assert detect_poles(collapsed, sig, 5.0, y_sd=1.0) == Regime.NULLSPACE_POLE


class TestConfigValidation:
    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            SamplerConfig(samples_per_chain=100, burn_in=100)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(chains=0),
            dict(leapfrog_steps=0),
            dict(target_accept=1.0),
            dict(target_accept=0.0),
            dict(jobs=0),
            dict(burn_in=-1),
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValidationError):
            SamplerConfig(**kwargs)

    def test_kept_per_chain(self):
        assert SamplerConfig(samples_per_chain=900, burn_in=400).kept_per_chain == 500


class TestReproducibility:
    def test_identical_draws_for_identical_config(self):
        d = make_density()
        p1 = run_mcmc(d, SamplerConfig(**SMALL))
        p2 = run_mcmc(d, SamplerConfig(**SMALL))
        np.testing.assert_array_equal(p1.samples, p2.samples)
        np.testing.assert_array_equal(p1.log_posteriors, p2.log_posteriors)

    def test_seed_changes_draws(self):
        d = make_density()
        p1 = run_mcmc(d, SamplerConfig(**SMALL))
        p2 = run_mcmc(d, SamplerConfig(**{**SMALL, "seed": 1}))
        assert not np.array_equal(p1.samples, p2.samples)

    def test_thread_count_does_not_change_draws(self):
        # Chain seeds are split up front, so scheduling cannot matter.
        d = make_density()
        p1 = run_mcmc(d, SamplerConfig(**SMALL, jobs=1))
        p2 = run_mcmc(d, SamplerConfig(**SMALL, jobs=2))
        np.testing.assert_array_equal(p1.samples, p2.samples)


class TestCalibration:
    def test_gaussian_moments(self):
        # 10^4 kept draws from a correlated 2-D normal; both moments must
        # land within 10% even without a preconditioner.
        mu = np.array([1.0, -1.0])
        cov = np.array([[1.0, 0.3], [0.3, 0.5]])
        cfg = SamplerConfig(chains=2, samples_per_chain=5500, burn_in=500, seed=0)
        post = run_mcmc(GaussianTarget(mu, cov), cfg, init=mu)
        assert post.regime == Regime.NORMAL
        assert np.abs(post.h_hat - mu).max() < 0.1
        assert np.linalg.norm(post.Sigma_hat - cov) / np.linalg.norm(cov) < 0.1
        assert post.diagnostics.mixed

    def test_radial_shell_is_log_uniform(self):
        # p(x) ~ ||x||^-3 in 3-D restricted to a shell by C1 quadratic walls.
        # The radial marginal inside is r^2 r^-3 = 1/r, so log r is uniform:
        # exactly the geometry the norm prior induces along its scale
        # direction. Thinned in-shell draws must pass a KS test.
        a, b, W = 1.0, math.exp(2.0), 200.0

        class Shell:
            dim = 3

            def _fp(self, r):
                if r < a:
                    return -(3.0 / a) - 2.0 * W * (r - a)
                if r > b:
                    return -(3.0 / b) - 2.0 * W * (r - b)
                return -3.0 / r

            def log_density(self, x):
                r = float(np.linalg.norm(x))
                if r < 1e-12:
                    return -math.inf
                if r < a:
                    return -3.0 * math.log(a) - (3.0 / a) * (r - a) - W * (r - a) ** 2
                if r > b:
                    return -3.0 * math.log(b) - (3.0 / b) * (r - b) - W * (r - b) ** 2
                return -3.0 * math.log(r)

            def grad(self, x):
                r = float(np.linalg.norm(x))
                return self._fp(r) * x / max(r, 1e-12)

        cfg = SamplerConfig(chains=2, samples_per_chain=3500, burn_in=500, seed=5)
        post = run_mcmc(Shell(), cfg, init=np.array([math.e, 0.0, 0.0]))
        r = np.linalg.norm(post.samples, axis=1)
        thinned = r[::6]
        inside = thinned[(thinned >= a) & (thinned <= b)]
        assert inside.size > 0.8 * thinned.size  # walls hold
        u = np.log(inside) / math.log(b)
        assert stats.kstest(u, "uniform").pvalue > 0.01


class TestRegressionRuns:
    def test_known_noise_output_layout(self):
        d = make_density()
        post = run_mcmc(d, SamplerConfig(**SMALL))
        kept = 2 * (300 - 100)
        assert post.samples.shape == (kept, d.n_points)
        assert post.h_hat.shape == (d.n_points,)
        assert post.Sigma_hat.shape == (d.n_points, d.n_points)
        assert post.sigma_y_samples is None
        assert post.sigma_y_median is None
        assert post.n_basis == d.n_basis
        assert post.regime == Regime.NORMAL

    def test_unknown_noise_exposes_sigma_draws(self):
        d = make_density(noise=UnknownNoise(0.02))
        post = run_mcmc(d, SamplerConfig(**SMALL))
        assert post.samples.shape[1] == d.n_points + 1
        assert post.sigma_y_samples.shape == (post.samples.shape[0],)
        assert np.all(post.sigma_y_samples > 0)
        assert post.sigma_y_median > 0
        # Moments cover the h* block only, not log sigma.
        assert post.h_hat.shape == (d.n_points,)

    def test_generic_target_requires_init(self):
        with pytest.raises(ValidationError):
            run_mcmc(GaussianTarget([0.0], [[1.0]]), SamplerConfig(**SMALL))

    def test_init_length_checked(self):
        d = make_density()
        with pytest.raises(ValidationError):
            run_mcmc(d, SamplerConfig(**SMALL), init=np.zeros(d.n_points + 3))

    def test_divergent_chains_raised_for_explosive_target(self):
        # log p grows without bound, so leapfrog trajectories blow up. With
        # no burn-in the oversized initial step is never adapted away and a
        # majority of proposals diverge.
        class Explosive:
            dim = 2

            def log_density(self, x):
                return float(x @ x)

            def grad(self, x):
                return 2.0 * x

        cfg = SamplerConfig(chains=2, samples_per_chain=200, burn_in=0, seed=0)
        with pytest.raises(DivergentChains):
            run_mcmc(Explosive(), cfg, init=np.ones(2))

    def test_trace_file(self, tmp_path):
        d = make_density()
        path = tmp_path / "trace.csv"
        cfg = SamplerConfig(chains=2, samples_per_chain=120, burn_in=20, seed=0, trace_path=str(path))
        post = run_mcmc(d, cfg)
        lines = path.read_text().strip().split("\n")
        header = lines[0].split(",")
        assert header == [f"state_{i}" for i in range(d.n_points)] + ["log_posterior"]
        assert len(lines) - 1 == post.samples.shape[0]
        first = np.array([float(v) for v in lines[1].split(",")])
        np.testing.assert_allclose(first[:-1], post.samples[0], rtol=1e-15)
        np.testing.assert_allclose(first[-1], post.log_posteriors[0], rtol=1e-15)
