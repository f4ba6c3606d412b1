"""Ensemble sampling: substream determinism, statistical fidelity, cache parity."""

import numpy as np
import numpy.testing as npt
import pytest

from mixcast import (
    DenseCovariance,
    DiagonalCovariance,
    Ensemble,
    InvalidS,
    MixtureForecast,
    MvnComponent,
    NumericalError,
    ValidationError,
    sample_day_ahead,
    sample_ensemble,
    update,
)

from _oracles import materialized, mixture_moments, random_forecast


def _single_component_forecast(mean, var, t=2):
    # A T-step forecast whose final step is N(mean, var) independent of the rest.
    full_mean = np.zeros(t)
    full_mean[-1] = mean
    sigma = np.ones(t)
    sigma[-1] = np.sqrt(var)
    comp = MvnComponent(mean=full_mean, cov=DiagonalCovariance(sigma))
    return MixtureForecast.uniform([comp], instance_id="single")


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(1)
        fc = random_forecast(rng, 6, 3, instance_id="det")
        upd = update(fc, rng.standard_normal(2))
        a = sample_ensemble(upd, 64, seed=7)
        b = sample_ensemble(upd, 64, seed=7)
        assert np.array_equal(a.trajectories, b.trajectories)
        assert np.array_equal(a.components, b.components)

    def test_different_seeds_differ(self):
        rng = np.random.default_rng(2)
        fc = random_forecast(rng, 6, 3, instance_id="det")
        upd = update(fc, rng.standard_normal(2))
        a = sample_ensemble(upd, 64, seed=7)
        b = sample_ensemble(upd, 64, seed=8)
        assert not np.array_equal(a.trajectories, b.trajectories)

    def test_ensembles_nest_by_trace_index(self):
        # Trace s depends only on (seed, instance, s), so a larger ensemble
        # extends a smaller one row-for-row.
        rng = np.random.default_rng(3)
        fc = random_forecast(rng, 5, 4, instance_id="nest")
        upd = update(fc, rng.standard_normal(2))
        small = sample_ensemble(upd, 10, seed=11)
        large = sample_ensemble(upd, 100, seed=11)
        assert np.array_equal(large.trajectories[:10], small.trajectories)
        assert np.array_equal(large.components[:10], small.components)

    def test_instance_id_separates_streams(self):
        rng = np.random.default_rng(4)
        fc_a = random_forecast(rng, 5, 3, instance_id="a")
        fc_b = MixtureForecast(
            horizon=5,
            components=fc_a.components,
            weights=fc_a.weights,
            instance_id="b",
        )
        obs = rng.standard_normal(2)
        ens_a = sample_ensemble(update(fc_a, obs), 32, seed=5)
        ens_b = sample_ensemble(update(fc_b, obs), 32, seed=5)
        assert not np.array_equal(ens_a.trajectories, ens_b.trajectories)

    def test_metadata_recorded(self):
        rng = np.random.default_rng(5)
        fc = random_forecast(rng, 4, 3, instance_id="meta")
        upd = update(fc, rng.standard_normal(1))
        ens = sample_ensemble(upd, 8, seed=99)
        assert ens.n_traces == 8
        assert ens.remaining == 3
        assert ens.t_prime == 1
        assert ens.seed == 99
        assert ens.source_id == "meta"


class TestCacheParity:
    def test_cached_and_uncached_are_bit_identical(self):
        rng = np.random.default_rng(6)
        fc = random_forecast(rng, 7, 4, instance_id="parity")
        upd = update(fc, rng.standard_normal(3))
        cached = sample_ensemble(upd, 40, seed=13, cache=True)
        uncached = sample_ensemble(upd, 40, seed=13, cache=False)
        assert np.array_equal(cached.trajectories, uncached.trajectories)
        assert np.array_equal(cached.components, uncached.components)

    def test_parity_with_no_observations(self):
        rng = np.random.default_rng(7)
        fc = random_forecast(rng, 5, 3, instance_id="parity0")
        upd = update(fc, np.empty(0))
        cached = sample_ensemble(upd, 16, seed=3, cache=True)
        uncached = sample_ensemble(upd, 16, seed=3, cache=False)
        assert np.array_equal(cached.trajectories, uncached.trajectories)


class TestStatistics:
    def test_scalar_mean_and_variance(self):
        # Final step conditioned on one observed step is still N(3, 2);
        # 100k draws pin the sample mean within 5 standard errors.
        fc = _single_component_forecast(3.0, 2.0)
        upd = update(fc, [0.0])
        ens = sample_ensemble(upd, 100_000, seed=17)
        draws = ens.trajectories[:, 0]
        se_mean = np.sqrt(2.0 / draws.size)
        assert abs(draws.mean() - 3.0) < 5 * se_mean  # 0.0224 bound
        var = draws.var()
        se_var = 2.0 * np.sqrt(2.0 / draws.size)  # Var(s^2) ~ 2 sigma^4 / n
        assert abs(var - 2.0) < 5 * se_var

    def test_near_degenerate_variance_collapses_to_mean(self):
        fc = _single_component_forecast(1.5, 1e-12)
        upd = update(fc, [0.0])
        ens = sample_ensemble(upd, 1000, seed=19)
        npt.assert_allclose(ens.trajectories[:, 0], 1.5, rtol=0, atol=1e-5)

    def test_mixture_moments_recovered(self):
        rng = np.random.default_rng(23)
        fc = random_forecast(rng, 5, 3, instance_id="moments")
        upd = update(fc, rng.standard_normal(2))
        s = 50_000
        ens = sample_ensemble(upd, s, seed=29)
        mean_true, cov_true = mixture_moments(
            upd.conditioned_means(), upd.conditioned_covariances(), upd.gamma.gamma
        )
        draws = ens.trajectories
        se_mean = np.sqrt(np.diag(cov_true) / s)
        assert (np.abs(draws.mean(axis=0) - mean_true) < 5 * se_mean).all()
        cov_hat = np.cov(draws.T)
        d = np.sqrt(np.diag(cov_true))
        se_cov = np.sqrt((np.outer(d, d) ** 2 + cov_true**2) / s)
        assert (np.abs(cov_hat - cov_true) < 6 * se_cov).all()

    def test_component_frequencies_match_responsibilities(self):
        rng = np.random.default_rng(31)
        fc = random_forecast(rng, 5, 4, instance_id="freq")
        upd = update(fc, rng.standard_normal(2))
        gamma = upd.gamma.gamma
        s = 50_000
        ens = sample_ensemble(upd, s, seed=37)
        counts = np.bincount(ens.components, minlength=4) / s
        tol = 5 * np.sqrt(gamma * (1 - gamma) / s)
        assert (np.abs(counts - gamma) <= tol).all()

    def test_zero_weight_component_never_sampled(self):
        comps = [
            MvnComponent(mean=np.zeros(2), cov=DiagonalCovariance(np.ones(2))),
            MvnComponent(mean=np.full(2, 9.0), cov=DiagonalCovariance(np.ones(2))),
        ]
        fc = MixtureForecast(
            horizon=2,
            components=tuple(comps),
            weights=np.array([1.0, 0.0]),
            instance_id="zw",
        )
        ens = sample_ensemble(update(fc, np.empty(0)), 2000, seed=41)
        assert (ens.components == 0).all()

    def test_unfactorable_component_never_sampled(self):
        good = MvnComponent(mean=np.zeros(2), cov=DiagonalCovariance(np.ones(2)))
        bad = MvnComponent(mean=np.zeros(2), cov=DenseCovariance(np.diag([1.0, -1.0])))
        fc = MixtureForecast.uniform([good, bad], instance_id="degen")
        ens = sample_ensemble(update(fc, [0.1]), 2000, seed=43)
        assert (ens.components == 0).all()


class TestDayAhead:
    def test_covers_full_horizon(self):
        rng = np.random.default_rng(47)
        fc = random_forecast(rng, 6, 3, instance_id="da")
        ens = sample_day_ahead(fc, 500, seed=51)
        assert ens.trajectories.shape == (500, 6)
        assert ens.t_prime == 0

    def test_matches_prior_moments(self):
        rng = np.random.default_rng(53)
        fc = random_forecast(rng, 4, 2, instance_id="da2")
        s = 50_000
        ens = sample_day_ahead(fc, s, seed=59)
        mean_true, cov_true = mixture_moments(
            [c.mean for c in fc.components],
            [materialized(c) for c in fc.components],
            fc.weights,
        )
        se_mean = np.sqrt(np.diag(cov_true) / s)
        assert (np.abs(ens.trajectories.mean(axis=0) - mean_true) < 5 * se_mean).all()


class TestArguments:
    def _upd(self):
        rng = np.random.default_rng(61)
        fc = random_forecast(rng, 4, 3, instance_id="args")
        return update(fc, rng.standard_normal(1))

    def test_default_size_is_component_count(self):
        ens = sample_ensemble(self._upd(), seed=1)
        assert ens.n_traces == 3

    def test_single_trace(self):
        ens = sample_ensemble(self._upd(), 1, seed=1)
        assert ens.trajectories.shape == (1, 3)

    def test_invalid_sizes(self):
        upd = self._upd()
        for bad in (0, -4, 2.5, True):
            with pytest.raises(InvalidS):
                sample_ensemble(upd, bad, seed=1)

    def test_seed_is_required_and_integer(self):
        upd = self._upd()
        with pytest.raises(ValidationError):
            sample_ensemble(upd, 4)
        with pytest.raises(ValidationError):
            sample_ensemble(upd, 4, seed=None)
        with pytest.raises(ValidationError):
            sample_ensemble(upd, 4, seed=1.5)
        with pytest.raises(ValidationError):
            sample_ensemble(upd, 4, seed=True)

    def test_ensemble_validation(self):
        with pytest.raises(NumericalError):
            Ensemble(
                trajectories=np.array([[np.inf, 0.0]]),
                components=np.array([0]),
                t_prime=0,
                seed=0,
                source_id="",
            )
        with pytest.raises(ValidationError):
            Ensemble(
                trajectories=np.ones((2, 3)),
                components=np.array([0]),
                t_prime=0,
                seed=0,
                source_id="",
            )

    def test_ensemble_is_read_only(self):
        ens = sample_ensemble(self._upd(), 4, seed=1)
        with pytest.raises(ValueError):
            ens.trajectories[0, 0] = 0.0
