"""Exact conditioning of Gaussian-mixture forecasts on observed prefixes.

The heavyweight check here is the density-ratio oracle: for any mixture,
the predictive log-density of the remaining steps given an observed prefix
must equal the joint mixture log-density minus the observed-block mixture
log-density, both computed by an independent route (scipy + explicit
inverses).
"""

import concurrent.futures

import numpy as np
import numpy.testing as npt
import pytest

from mixcast import (
    AllComponentsDegenerate,
    DenseCovariance,
    DiagonalCovariance,
    DimensionMismatch,
    EmptyRange,
    ForecastUpdater,
    MixtureForecast,
    MvnComponent,
    NotPositiveDefinite,
    OutOfBounds,
    PatternDictionary,
    PdccCovariance,
    ValidationError,
    condition_component,
    log_density,
    marginalize,
    mixture_mean,
    posterior_weights,
    predictive_log_density,
    remaining_marginal,
    update,
)
from mixcast.mixture import posterior_weights_from_log_terms

from _oracles import (
    materialized,
    mixture_moments,
    random_forecast,
    random_spd,
    ref_conditional,
    ref_logpdf,
    ref_mixture_logpdf,
    ref_predictive_log_density,
)


def _fc_logpdf(fc, x):
    return ref_mixture_logpdf(
        [c.mean for c in fc.components],
        [materialized(c) for c in fc.components],
        fc.weights,
        x,
    )


def _scalar_component(mean, var):
    return MvnComponent(mean=np.array([float(mean)]),
                        cov=DenseCovariance(np.array([[float(var)]])))


class TestLogDensity:
    def test_standard_normal_at_zero(self):
        comp = _scalar_component(0.0, 1.0)
        assert log_density(comp, [0.0]) == pytest.approx(
            -0.9189385332046727, rel=0, abs=1e-15
        )

    def test_standard_normal_at_two(self):
        comp = _scalar_component(0.0, 1.0)
        assert log_density(comp, [2.0]) == pytest.approx(
            -2.9189385332046727, rel=0, abs=1e-15
        )

    def test_mean_three_variance_two_at_mode(self):
        # At the mode the density is 1/sqrt(2*pi*var): log = -0.5*ln(4*pi).
        comp = _scalar_component(3.0, 2.0)
        assert log_density(comp, [3.0]) == pytest.approx(
            -1.2655121234846454, rel=0, abs=1e-15
        )

    def test_matches_scipy_on_random_components(self):
        rng = np.random.default_rng(101)
        for _ in range(10):
            n = int(rng.integers(1, 8))
            mean = rng.standard_normal(n)
            cov = random_spd(rng, n)
            comp = MvnComponent(mean=mean, cov=DenseCovariance(cov))
            x = mean + rng.standard_normal(n)
            npt.assert_allclose(
                log_density(comp, x), ref_logpdf(mean, cov, x), rtol=1e-10
            )

    def test_wrong_length_rejected(self):
        comp = _scalar_component(0.0, 1.0)
        with pytest.raises(DimensionMismatch):
            log_density(comp, [0.0, 1.0])


class TestPosteriorWeights:
    def test_two_component_pinned_example(self):
        # Equal-weight pair whose first-step marginals are N(0,1) and N(4,1);
        # observing 0 gives responsibilities (1, e^-8) / (1 + e^-8).
        fc = MixtureForecast.uniform([
            MvnComponent(mean=np.array([0.0, 0.0]), cov=DiagonalCovariance(np.ones(2))),
            MvnComponent(mean=np.array([4.0, 0.0]), cov=DiagonalCovariance(np.ones(2))),
        ])
        gamma = posterior_weights(fc, [0.0]).gamma
        z = np.exp(-8.0)
        npt.assert_allclose(gamma, [1.0 / (1.0 + z), z / (1.0 + z)], rtol=1e-13)
        npt.assert_allclose(gamma, [0.999665, 0.000335], atol=5e-7)

    def test_matches_direct_bayes_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(8):
            t = int(rng.integers(3, 7))
            k = int(rng.integers(1, 5))
            fc = random_forecast(rng, t, k)
            tp = int(rng.integers(1, t))
            obs = rng.standard_normal(tp)
            gamma = posterior_weights(fc, obs).gamma
            raw = np.array([
                fc.weights[j] * np.exp(
                    ref_logpdf(c.mean[:tp], materialized(c)[:tp, :tp], obs)
                )
                for j, c in enumerate(fc.components)
            ])
            npt.assert_allclose(gamma, raw / raw.sum(), rtol=1e-10, atol=1e-15)

    def test_sums_to_one_and_empty_prefix_returns_prior(self):
        rng = np.random.default_rng(33)
        fc = random_forecast(rng, 5, 4)
        gamma = posterior_weights(fc, np.empty(0)).gamma
        assert np.array_equal(gamma, fc.weights)
        obs = rng.standard_normal(3)
        g = posterior_weights(fc, obs).gamma
        assert abs(g.sum() - 1.0) <= 1e-12
        assert (g >= 0).all()

    def test_full_horizon_allowed_for_posterior_only(self):
        rng = np.random.default_rng(35)
        fc = random_forecast(rng, 4, 2)
        obs = rng.standard_normal(4)
        g = posterior_weights(fc, obs).gamma
        assert abs(g.sum() - 1.0) <= 1e-12
        with pytest.raises(OutOfBounds):
            update(fc, obs)

    def test_extreme_log_terms_stay_finite(self):
        # Max-shift normalization must survive huge dynamic range.
        log_prior = np.log(np.array([0.5, 0.5]))
        log_like = np.array([-1e6, -2e6])
        gamma = posterior_weights_from_log_terms(log_prior, log_like)
        assert np.isfinite(gamma).all()
        npt.assert_allclose(gamma, [1.0, 0.0], atol=1e-300)

    def test_constant_shifts_leave_gamma_unchanged(self):
        rng = np.random.default_rng(40)
        log_prior = np.log(rng.dirichlet(np.ones(4)))
        log_like = rng.standard_normal(4) * 10
        base = posterior_weights_from_log_terms(log_prior, log_like)
        shifted = posterior_weights_from_log_terms(log_prior + 3.7, log_like - 123.0)
        npt.assert_allclose(shifted, base, rtol=1e-13)

    def test_all_degenerate_raises(self):
        with pytest.raises(AllComponentsDegenerate):
            posterior_weights_from_log_terms(
                np.array([-np.inf, -np.inf]), np.array([0.0, 0.0])
            )


class TestConditioning:
    def test_single_component_pinned_example(self):
        # Prior N([0, 2], [[1, 1], [1, 3]]); observing x1 = 1 conditions the
        # second step to N(3, 2), whose log-density at 3 is -0.5*ln(4*pi).
        comp = MvnComponent(
            mean=np.array([0.0, 2.0]),
            cov=DenseCovariance(np.array([[1.0, 1.0], [1.0, 3.0]])),
        )
        fc = MixtureForecast.uniform([comp])
        upd = update(fc, [1.0])
        mean, cov = upd.conditioned(0)
        npt.assert_allclose(mean, [3.0], rtol=1e-14)
        npt.assert_allclose(cov, [[2.0]], rtol=1e-12)
        assert predictive_log_density(upd, [3.0]) == pytest.approx(
            -1.2655121234846454, rel=1e-13
        )

    def test_component_conditional_matches_explicit_inverse(self):
        rng = np.random.default_rng(55)
        for _ in range(10):
            t = int(rng.integers(2, 9))
            tp = int(rng.integers(1, t))
            mean = rng.standard_normal(t)
            cov = random_spd(rng, t)
            comp = MvnComponent(mean=mean, cov=DenseCovariance(cov))
            obs = rng.standard_normal(tp)
            got_mean, got_cov = condition_component(comp, obs)
            exp_mean, exp_cov = ref_conditional(mean, cov, obs)
            npt.assert_allclose(got_mean, exp_mean, rtol=1e-9, atol=1e-12)
            npt.assert_allclose(got_cov, exp_cov, rtol=1e-9, atol=1e-12)

    def test_predictive_matches_density_ratio_oracle(self):
        rng = np.random.default_rng(77)
        worst = 0.0
        for _ in range(12):
            t = int(rng.integers(2, 8))
            k = int(rng.integers(1, 6))
            fc = random_forecast(rng, t, k)
            tp = int(rng.integers(1, t))
            obs = rng.standard_normal(tp)
            upd = update(fc, obs)
            for _ in range(4):
                x = rng.standard_normal(t - tp) * 2.0
                got = predictive_log_density(upd, x)
                want = ref_predictive_log_density(fc, obs, x)
                worst = max(worst, abs(got - want) / max(1.0, abs(want)))
        assert worst <= 1e-9

    def test_empty_prefix_is_identity(self):
        rng = np.random.default_rng(88)
        fc = random_forecast(rng, 5, 3)
        upd = update(fc, np.empty(0))
        assert upd.t_prime == 0
        assert upd.remaining == 5
        assert np.array_equal(upd.gamma.gamma, fc.weights)
        means = np.stack([c.mean for c in fc.components])
        npt.assert_allclose(upd.conditioned_means(), means, rtol=0, atol=0)
        x = rng.standard_normal(5)
        npt.assert_allclose(
            predictive_log_density(upd, x),
            _fc_logpdf(fc, x),
            rtol=1e-10,
        )

    def test_sequential_updates_compose(self):
        # Conditioning on a + b steps at once must agree with conditioning
        # on a steps, repackaging, then conditioning on the next b.
        rng = np.random.default_rng(91)
        fc = random_forecast(rng, 7, 4)
        obs = rng.standard_normal(5)
        once = update(fc, obs)
        staged = update(update(fc, obs[:2]).as_forecast(), obs[2:])
        for _ in range(5):
            x = rng.standard_normal(2)
            npt.assert_allclose(
                predictive_log_density(staged, x),
                predictive_log_density(once, x),
                rtol=1e-8,
            )
        npt.assert_allclose(mixture_mean(staged), mixture_mean(once), rtol=1e-8)

    def test_conditioned_covariances_are_psd(self):
        rng = np.random.default_rng(99)
        fc = random_forecast(rng, 6, 3)
        upd = update(fc, rng.standard_normal(2))
        for cov in upd.conditioned_covariances():
            assert np.linalg.eigvalsh(cov).min() >= -1e-10

    def test_conditioned_covariance_ignores_observed_values(self):
        rng = np.random.default_rng(111)
        fc = random_forecast(rng, 6, 3)
        updater = ForecastUpdater(fc)
        a = updater.update(rng.standard_normal(3))
        b = updater.update(rng.standard_normal(3) + 50.0)
        assert np.array_equal(a.conditioned_covariances(), b.conditioned_covariances())
        assert not np.array_equal(a.conditioned_means(), b.conditioned_means())

    def test_component_order_invariance(self):
        rng = np.random.default_rng(123)
        fc = random_forecast(rng, 5, 4)
        perm = rng.permutation(4)
        fc2 = MixtureForecast(
            horizon=5,
            components=tuple(fc.components[i] for i in perm),
            weights=fc.weights[perm],
        )
        obs = rng.standard_normal(2)
        g1 = posterior_weights(fc, obs).gamma
        g2 = posterior_weights(fc2, obs).gamma
        npt.assert_allclose(g2, g1[perm], rtol=1e-12)
        x = rng.standard_normal(3)
        npt.assert_allclose(
            predictive_log_density(update(fc2, obs), x),
            predictive_log_density(update(fc, obs), x),
            rtol=1e-12,
        )

    def test_full_horizon_update_rejected_with_guidance(self):
        rng = np.random.default_rng(131)
        fc = random_forecast(rng, 3, 2)
        with pytest.raises(OutOfBounds, match="no remaining steps"):
            update(fc, np.zeros(3))
        with pytest.raises(OutOfBounds):
            update(fc, np.zeros(4))

    def test_mixture_mean_is_responsibility_average(self):
        rng = np.random.default_rng(141)
        fc = random_forecast(rng, 6, 3)
        obs = rng.standard_normal(2)
        upd = update(fc, obs)
        expected = upd.gamma.gamma @ upd.conditioned_means()
        npt.assert_allclose(mixture_mean(upd), expected, rtol=1e-13)

    def test_pattern_dictionary_components_condition_correctly(self):
        rng = np.random.default_rng(151)
        t, v, k = 6, 9, 3
        d = PatternDictionary(id="shared", u=rng.standard_normal((t, v)))
        comps = tuple(
            MvnComponent(
                mean=rng.standard_normal(t),
                cov=PdccCovariance(
                    dictionary=d,
                    aux_sigma=rng.uniform(0.3, 1.2, size=v),
                    ridge=1e-4,
                ),
            )
            for _ in range(k)
        )
        fc = MixtureForecast.uniform(comps, instance_id="pdcc")
        obs = rng.standard_normal(2)
        upd = update(fc, obs)
        x = rng.standard_normal(4)
        npt.assert_allclose(
            predictive_log_density(upd, x),
            ref_predictive_log_density(fc, obs, x),
            rtol=1e-9,
        )

    def test_density_dominant_component_with_vanishing_responsibility(self):
        # The far component is all but ruled out by the prefix (its
        # responsibility lands below the normal floating-point range), yet
        # its tiny future variance gives it the largest conditional density.
        # The weighted reduction must neither overflow nor let the dead
        # component hijack the result.
        near = MvnComponent(mean=np.array([0.0, 0.0]),
                            cov=DiagonalCovariance(np.array([1.0, 1.0])))
        far = MvnComponent(mean=np.array([38.2, 3.0]),
                           cov=DiagonalCovariance(np.array([1.0, 1e-3])))
        fc = MixtureForecast.uniform((near, far), instance_id="tail")
        obs = np.array([0.0])
        upd = update(fc, obs)
        g = upd.gamma.gamma
        assert 0.0 < g[1] < np.finfo(float).tiny  # subnormal, not flushed
        x = np.array([3.0])
        got = predictive_log_density(upd, x)
        assert np.isfinite(got)
        # gamma_near rounds to 1.0, so the mixture collapses to the near
        # component's N(0, 1) density at 3.0: -(ln(2*pi) + 9) / 2.
        assert got == pytest.approx(-5.418938533204673, rel=0, abs=1e-12)
        npt.assert_allclose(got, ref_predictive_log_density(fc, obs, x), rtol=1e-12)


class TestDegenerateComponents:
    def _mixed_forecast(self):
        good = MvnComponent(
            mean=np.array([0.0, 0.0]),
            cov=DenseCovariance(np.array([[1.0, 0.2], [0.2, 1.0]])),
        )
        bad = MvnComponent(
            mean=np.array([5.0, 5.0]),
            cov=DenseCovariance(np.diag([1.0, -1.0])),
        )
        return MixtureForecast.uniform([good, bad])

    def test_unfactorable_component_gets_zero_weight(self):
        fc = self._mixed_forecast()
        upd = update(fc, [0.3])
        assert upd.usable.tolist() == [True, False]
        assert upd.gamma.gamma[1] == 0.0
        assert upd.gamma.gamma[0] == 1.0
        with pytest.raises(NotPositiveDefinite):
            upd.conditioned(1)
        mean0, _ = upd.conditioned(0)
        assert np.isfinite(mean0).all()

    def test_predictive_excludes_degenerate_component(self):
        fc = self._mixed_forecast()
        upd = update(fc, [0.3])
        solo = MixtureForecast.uniform([fc.components[0]])
        npt.assert_allclose(
            predictive_log_density(upd, [0.5]),
            predictive_log_density(update(solo, [0.3]), [0.5]),
            rtol=1e-12,
        )

    def test_all_degenerate_raises(self):
        bad = MvnComponent(
            mean=np.zeros(2), cov=DenseCovariance(np.diag([1.0, -1.0]))
        )
        fc = MixtureForecast.uniform([bad])
        with pytest.raises(AllComponentsDegenerate):
            update(fc, [0.0])


class TestMarginals:
    def test_slices_means_and_covariances(self):
        rng = np.random.default_rng(161)
        fc = random_forecast(rng, 6, 3)
        sub = marginalize(fc, 2, 5)
        assert sub.horizon == 3
        assert np.array_equal(sub.weights, fc.weights)
        for orig, cut in zip(fc.components, sub.components):
            assert np.array_equal(cut.mean, orig.mean[2:5])
            assert np.array_equal(materialized(cut), materialized(orig)[2:5, 2:5])

    def test_marginal_density_matches_sliced_oracle(self):
        rng = np.random.default_rng(171)
        fc = random_forecast(rng, 6, 3)
        sub = remaining_marginal(fc, 2)
        x = rng.standard_normal(4)
        direct = np.logaddexp.reduce([
            np.log(w) + ref_logpdf(c.mean[2:], materialized(c)[2:, 2:], x)
            for w, c in zip(fc.weights, fc.components)
        ])
        npt.assert_allclose(_fc_logpdf(sub, x), direct, rtol=1e-12)
        npt.assert_allclose(
            predictive_log_density(update(sub, np.empty(0)), x), direct, rtol=1e-10
        )

    def test_full_range_returns_same_object(self):
        rng = np.random.default_rng(181)
        fc = random_forecast(rng, 4, 2)
        assert marginalize(fc, 0, 4) is fc

    def test_diagonal_stays_diagonal_and_pdcc_densifies(self):
        rng = np.random.default_rng(191)
        diag = MvnComponent(
            mean=rng.standard_normal(4),
            cov=DiagonalCovariance(rng.uniform(0.5, 1.0, 4)),
        )
        d = PatternDictionary(id="d", u=rng.standard_normal((4, 5)))
        pdcc = MvnComponent(
            mean=rng.standard_normal(4),
            cov=PdccCovariance(dictionary=d, aux_sigma=rng.uniform(0.5, 1.0, 5), ridge=0.0),
        )
        fc = MixtureForecast.uniform([diag, pdcc])
        sub = marginalize(fc, 1, 3)
        assert isinstance(sub.components[0].cov, DiagonalCovariance)
        assert isinstance(sub.components[1].cov, DenseCovariance)

    def test_range_validation(self):
        rng = np.random.default_rng(201)
        fc = random_forecast(rng, 4, 2)
        with pytest.raises(EmptyRange):
            marginalize(fc, 2, 2)
        with pytest.raises(OutOfBounds):
            marginalize(fc, 0, 5)
        with pytest.raises(OutOfBounds):
            remaining_marginal(fc, 4)

    def test_marginal_tail_workspace_matches_standalone_marginal(self):
        rng = np.random.default_rng(211)
        fc = random_forecast(rng, 6, 3, instance_id="tail-check")
        updater = ForecastUpdater(fc)
        tail = updater.marginal_tail(2)
        assert tail.forecast is None
        assert tail.instance_id == "tail-check"
        upd = tail.update(np.empty(0))
        assert np.array_equal(upd.gamma.gamma, fc.weights)
        x = rng.standard_normal(4)
        npt.assert_allclose(
            predictive_log_density(upd, x),
            _fc_logpdf(remaining_marginal(fc, 2), x),
            rtol=1e-9,
        )


class TestForecastValidation:
    def _comp(self, t=3):
        return MvnComponent(mean=np.zeros(t), cov=DiagonalCovariance(np.ones(t)))

    def test_weight_simplex_enforced(self):
        with pytest.raises(ValidationError):
            MixtureForecast(horizon=3, components=(self._comp(), self._comp()),
                            weights=np.array([0.6, 0.6]))
        with pytest.raises(ValidationError):
            MixtureForecast(horizon=3, components=(self._comp(), self._comp()),
                            weights=np.array([1.2, -0.2]))
        with pytest.raises(DimensionMismatch):
            MixtureForecast(horizon=3, components=(self._comp(), self._comp()),
                            weights=np.array([1.0]))

    def test_component_horizons_must_match(self):
        with pytest.raises(DimensionMismatch):
            MixtureForecast(horizon=3, components=(self._comp(3), self._comp(4)),
                            weights=np.array([0.5, 0.5]))

    def test_uniform_weights(self):
        fc = MixtureForecast.uniform([self._comp() for _ in range(4)])
        assert np.array_equal(fc.weights, np.full(4, 0.25))

    def test_pattern_dictionaries_must_be_shared_objects(self):
        rng = np.random.default_rng(221)
        u = rng.standard_normal((3, 4))
        d1 = PatternDictionary(id="same", u=u)
        d2 = PatternDictionary(id="same", u=u)

        def comp(d):
            return MvnComponent(
                mean=np.zeros(3),
                cov=PdccCovariance(dictionary=d, aux_sigma=np.ones(4), ridge=0.0),
            )

        MixtureForecast.uniform([comp(d1), comp(d1)])
        with pytest.raises(ValidationError):
            MixtureForecast.uniform([comp(d1), comp(d2)])

    def test_empty_mixture_rejected(self):
        with pytest.raises(ValidationError):
            MixtureForecast(horizon=3, components=(), weights=np.empty(0))


class TestConcurrentAccess:
    def test_lazy_conditioning_is_race_free(self):
        rng = np.random.default_rng(231)
        fc = random_forecast(rng, 8, 4)
        updater = ForecastUpdater(fc)
        obs = rng.standard_normal(3)

        def work(_):
            upd = updater.update(obs)
            return upd.conditioned_means(), upd.conditioned_covariances()

        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(work, range(16)))
        m0, c0 = results[0]
        for m, c in results[1:]:
            assert np.array_equal(m, m0)
            assert np.array_equal(c, c0)
