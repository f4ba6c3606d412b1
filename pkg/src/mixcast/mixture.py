"""Gaussian-mixture forecasts and their exact Bayesian intraday updates.

A day-ahead forecast is a weighted mixture of multivariate normal components
over a ``T``-step horizon.  Once the first ``T'`` steps of the day have been
observed, the distribution of the remaining ``T - T'`` steps given those
observations is again a Gaussian mixture:

* each component is conditioned exactly (its mean is shifted by the observed
  residual through the cross-covariance; its covariance becomes the Schur
  complement of the observed block), and
* the component weights are reweighted by how well each component explains
  the observations (computed in log space with max-shift normalization).

All linear algebra goes through triangular factorizations — never explicit
inverses or determinants.  A single lower Cholesky factor ``L`` of each
component's full covariance serves every update time: the leading ``T' x T'``
block of ``L`` factors the observed block, and the trailing block ``L22`` is
itself the Cholesky factor of the conditional covariance
(``L22 @ L22.T`` is the Schur complement).  ``ForecastUpdater`` holds that
factorization so repeated updates of one forecast share the work.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp

from .covariance import (
    CovarianceSpec,
    DenseCovariance,
    DiagonalCovariance,
    PdccCovariance,
    cholesky_lower,
    cholesky_lower_batch,
    dimension,
    materialize,
)
from .errors import (
    AllComponentsDegenerate,
    DimensionMismatch,
    EmptyRange,
    NonFiniteInput,
    NotPositiveDefinite,
    OutOfBounds,
    ValidationError,
)

__all__ = [
    "MvnComponent",
    "MixtureForecast",
    "PosteriorWeights",
    "ForecastUpdater",
    "IntradayUpdate",
    "log_density",
    "marginalize",
    "remaining_marginal",
    "condition_component",
    "posterior_weights",
    "posterior_weights_from_log_terms",
    "update",
    "predictive_log_density",
    "mixture_mean",
    "SIMPLEX_TOL",
]

SIMPLEX_TOL = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


def _matvec(mats: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Batched matrix-vector product ``mats[..., i, j] @ vecs[..., j]``.

    Implemented as multiply-then-sum so the freshly allocated product array
    makes the reduction order independent of the operands' memory layout;
    single and batched calls on equal values therefore agree bit-for-bit.
    """
    return (mats * vecs[..., None, :]).sum(axis=-1)


def _solve_lower(factors: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``factors @ y = rhs`` for stacked square factors."""
    return np.linalg.solve(factors, rhs[..., None])[..., 0]


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be a 1-D vector")
    if not np.isfinite(arr).all():
        raise NonFiniteInput(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class MvnComponent:
    """One multivariate-normal mixture component: mean vector plus covariance."""

    mean: NDArray[np.float64]
    cov: CovarianceSpec

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64, copy=True)
        if mean.ndim != 1 or mean.size < 1:
            raise DimensionMismatch("mean must be a non-empty vector")
        if not np.isfinite(mean).all():
            raise NonFiniteInput("mean contains non-finite entries")
        if mean.size != dimension(self.cov):
            raise DimensionMismatch(
                f"mean length {mean.size} does not match covariance dimension {dimension(self.cov)}"
            )
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @property
    def horizon(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class MixtureForecast:
    """A weighted Gaussian mixture over a daily horizon.

    Parameters
    ----------
    horizon : int
        Number of time steps ``T``.
    components : sequence of MvnComponent
        The ``K`` mixture components, all spanning ``horizon`` steps.  Any
        pattern-dictionary covariances must share one dictionary object.
    weights : array of shape (K,)
        Non-negative weights summing to 1 within 1e-12.
    instance_id : str
        Identifier tying the forecast to a data instance; it also keys the
        sampler's per-trace random substreams.
    condition : object, optional
        Opaque exogenous-condition record carried along for serialization.
    """

    horizon: int
    components: tuple[MvnComponent, ...]
    weights: NDArray[np.float64]
    instance_id: str = ""
    condition: Any = None

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise ValidationError("a mixture needs at least one component")
        horizon = int(self.horizon)
        if horizon < 1:
            raise ValidationError("horizon must be positive")
        for comp in components:
            if not isinstance(comp, MvnComponent):
                raise ValidationError("components must be MvnComponent instances")
            if comp.horizon != horizon:
                raise DimensionMismatch(
                    f"component spans {comp.horizon} steps, expected {horizon}"
                )
        shared = [c.cov.dictionary for c in components if isinstance(c.cov, PdccCovariance)]
        if shared and any(d is not shared[0] for d in shared[1:]):
            raise ValidationError(
                "all pattern-dictionary covariances in a forecast must share one dictionary"
            )
        weights = np.array(self.weights, dtype=np.float64, copy=True)
        if weights.shape != (len(components),):
            raise DimensionMismatch("weights length must equal the number of components")
        if not np.isfinite(weights).all():
            raise NonFiniteInput("weights contain non-finite entries")
        if (weights < 0).any():
            raise ValidationError("weights must be non-negative")
        if abs(float(weights.sum()) - 1.0) > SIMPLEX_TOL:
            raise ValidationError("weights must sum to 1 within 1e-12")
        weights.setflags(write=False)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(
        cls,
        components: Sequence[MvnComponent],
        instance_id: str = "",
        condition: Any = None,
    ) -> "MixtureForecast":
        """Build a mixture with equal weights ``1/K``."""
        components = tuple(components)
        if not components:
            raise ValidationError("a mixture needs at least one component")
        k = len(components)
        return cls(
            horizon=components[0].horizon,
            components=components,
            weights=np.full(k, 1.0 / k),
            instance_id=instance_id,
            condition=condition,
        )

    @property
    def n_components(self) -> int:
        return len(self.components)


@dataclass(frozen=True, eq=False)
class PosteriorWeights:
    """Component responsibilities after observing the first ``t_prime`` steps."""

    gamma: NDArray[np.float64]
    t_prime: int

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=np.float64, copy=True)
        if gamma.ndim != 1 or gamma.size < 1:
            raise DimensionMismatch("gamma must be a non-empty vector")
        if not np.isfinite(gamma).all():
            raise NonFiniteInput("gamma contains non-finite entries")
        if (gamma < 0).any():
            raise ValidationError("gamma must be non-negative")
        if abs(float(gamma.sum()) - 1.0) > SIMPLEX_TOL:
            raise ValidationError("gamma must sum to 1 within 1e-12")
        t_prime = int(self.t_prime)
        if t_prime < 0:
            raise OutOfBounds("t_prime must be >= 0")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "t_prime", t_prime)


def posterior_weights_from_log_terms(
    log_prior: np.ndarray, log_likelihood: np.ndarray
) -> np.ndarray:
    """Normalize ``log_prior + log_likelihood`` into responsibilities.

    Uses max-shift exponentiation, so adding any constant to ``log_prior``
    (i.e. scaling all prior weights by a positive factor) leaves the result
    unchanged.  Entries of ``-inf`` (or NaN, treated as ``-inf``) drop out
    with weight exactly 0.

    Raises
    ------
    AllComponentsDegenerate
        If every entry is ``-inf``.
    """
    log_prior = np.asarray(log_prior, dtype=np.float64)
    log_likelihood = np.asarray(log_likelihood, dtype=np.float64)
    if log_prior.shape != log_likelihood.shape or log_prior.ndim != 1:
        raise DimensionMismatch("log terms must be 1-D vectors of equal length")
    logw = log_prior + log_likelihood
    logw = np.where(np.isnan(logw), -np.inf, logw)
    shift = logw.max()
    if shift == -np.inf:
        raise AllComponentsDegenerate(
            "every component has zero posterior mass for this observation"
        )
    gamma = np.exp(logw - shift)
    gamma /= gamma.sum()
    return gamma


class ForecastUpdater:
    """Reusable per-forecast workspace for repeated intraday updates.

    Construction materializes every component covariance and factors it once;
    ``update`` then costs only triangular solves against the stored factors,
    whatever the update time.  Immutable after construction and safe to share
    across threads.

    Components whose covariance cannot be factored (even with jitter) are
    flagged in ``ok`` and participate with posterior weight exactly 0.
    """

    __slots__ = (
        "forecast",
        "instance_id",
        "condition",
        "horizon",
        "n_components",
        "weights",
        "means",
        "sigmas",
        "chols",
        "ok",
        "log_prior",
        "_raw_log_weights",
    )

    def __init__(self, forecast: MixtureForecast):
        self.forecast: Optional[MixtureForecast] = forecast
        self.instance_id = forecast.instance_id
        self.condition = forecast.condition
        self.horizon = forecast.horizon
        self.n_components = forecast.n_components
        self.weights = forecast.weights
        self.means = np.stack([c.mean for c in forecast.components])
        sigmas = np.empty((self.n_components, self.horizon, self.horizon))
        for k, comp in enumerate(forecast.components):
            sigmas[k] = materialize(comp.cov)
        self.sigmas = sigmas
        self.chols, self.ok = cholesky_lower_batch(sigmas)
        with np.errstate(divide="ignore"):
            self._raw_log_weights = np.log(self.weights)
        self.log_prior = np.where(self.ok, self._raw_log_weights, -np.inf)

    def marginal_tail(self, t_prime: int) -> "ForecastUpdater":
        """Workspace for the non-updated marginal over steps ``t_prime..T-1``.

        Restricts means and covariances to the remaining horizon and refactors
        them, keeping the prior weights.  The result has no source forecast
        object attached (``forecast`` is None); use :func:`remaining_marginal`
        when a standalone marginal forecast is needed.
        """
        t_prime = self._check_t_prime(t_prime, allow_full=False)
        tail = object.__new__(ForecastUpdater)
        tail.forecast = None
        tail.instance_id = self.instance_id
        tail.condition = self.condition
        tail.horizon = self.horizon - t_prime
        tail.n_components = self.n_components
        tail.weights = self.weights
        tail.means = np.ascontiguousarray(self.means[:, t_prime:])
        tail.sigmas = np.ascontiguousarray(self.sigmas[:, t_prime:, t_prime:])
        tail.chols, tail.ok = cholesky_lower_batch(tail.sigmas)
        tail._raw_log_weights = self._raw_log_weights
        tail.log_prior = np.where(tail.ok, tail._raw_log_weights, -np.inf)
        return tail

    def _check_t_prime(self, t_prime: int, allow_full: bool) -> int:
        t_prime = int(t_prime)
        limit = self.horizon if allow_full else self.horizon - 1
        if not 0 <= t_prime <= limit:
            if t_prime == self.horizon and not allow_full:
                raise OutOfBounds(
                    "cannot update with the full horizon observed: no remaining steps "
                    f"(stop at t_prime = {self.horizon - 1})"
                )
            raise OutOfBounds(f"t_prime {t_prime} outside [0, {limit}]")
        return t_prime

    def _observed_state(self, observations) -> tuple[np.ndarray, np.ndarray]:
        """Responsibilities and whitened residuals for an observation prefix."""
        obs = _as_vector(observations, "observations")
        t_prime = obs.size
        if t_prime == 0:
            y = np.zeros((self.n_components, 0))
            if self.ok.all():
                return self.weights.copy(), y
            return posterior_weights_from_log_terms(self.log_prior, np.zeros(self.n_components)), y
        lower = self.chols[:, :t_prime, :t_prime]
        y = _solve_lower(lower, obs[None, :] - self.means[:, :t_prime])
        quad = (y * y).sum(axis=-1)
        diag = np.diagonal(self.chols, axis1=1, axis2=2)[:, :t_prime]
        log_det = 2.0 * np.log(diag).sum(axis=-1)
        log_like = -0.5 * (t_prime * _LOG_2PI + log_det + quad)
        gamma = posterior_weights_from_log_terms(self.log_prior, log_like)
        return gamma, y

    def posterior(self, observations) -> PosteriorWeights:
        """Responsibilities given the first ``len(observations)`` steps.

        Unlike :meth:`update`, observing the entire horizon is allowed here.
        """
        obs = _as_vector(observations, "observations")
        self._check_t_prime(obs.size, allow_full=True)
        gamma, _ = self._observed_state(obs)
        return PosteriorWeights(gamma=gamma, t_prime=obs.size)

    def update(self, observations) -> "IntradayUpdate":
        """Condition the forecast on an observed prefix of the day.

        ``observations`` holds steps ``0..t_prime-1``; at least one step must
        remain unobserved.
        """
        obs = _as_vector(observations, "observations")
        self._check_t_prime(obs.size, allow_full=False)
        gamma, y = self._observed_state(obs)
        return IntradayUpdate(self, obs, gamma, y)


class IntradayUpdate:
    """A forecast conditioned on the first ``t_prime`` observed steps.

    Holds the posterior responsibilities ``gamma`` and, populated lazily on
    first use, the conditioned per-component means, Cholesky factors, and
    covariances over the remaining horizon.  Population is write-once per
    field and lock-protected, so concurrent readers always see identical
    values.
    """

    def __init__(
        self,
        updater: ForecastUpdater,
        observations: np.ndarray,
        gamma: np.ndarray,
        y: np.ndarray,
    ):
        self._updater = updater
        obs = np.array(observations, dtype=np.float64, copy=True)
        obs.setflags(write=False)
        self.observations = obs
        self.t_prime = obs.size
        self.gamma = PosteriorWeights(gamma=gamma, t_prime=self.t_prime)
        self._y = y
        self._lock = threading.Lock()
        self._cond_means: Optional[np.ndarray] = None
        self._cond_chols: Optional[np.ndarray] = None
        self._cond_covs: Optional[np.ndarray] = None

    @property
    def source(self) -> Optional[MixtureForecast]:
        """The forecast this update conditions (None for internal marginals)."""
        return self._updater.forecast

    @property
    def updater(self) -> ForecastUpdater:
        """The workspace holding the source mixture's full factorizations."""
        return self._updater

    @property
    def instance_id(self) -> str:
        return self._updater.instance_id

    @property
    def horizon(self) -> int:
        return self._updater.horizon

    @property
    def remaining(self) -> int:
        """Number of unobserved steps ``T - t_prime``."""
        return self._updater.horizon - self.t_prime

    @property
    def n_components(self) -> int:
        return self._updater.n_components

    @property
    def usable(self) -> np.ndarray:
        """Boolean mask of components whose covariance factorization succeeded."""
        return self._updater.ok

    def _ensure_conditioned(self) -> None:
        if self._cond_means is not None:
            return
        with self._lock:
            if self._cond_means is not None:
                return
            t_prime = self.t_prime
            chols = self._updater.chols
            cross = chols[:, t_prime:, :t_prime]
            cond_chols = np.ascontiguousarray(chols[:, t_prime:, t_prime:])
            cond_means = self._updater.means[:, t_prime:] + _matvec(cross, self._y)
            self._cond_chols = cond_chols
            self._cond_means = cond_means

    def conditioned_means(self) -> np.ndarray:
        """Conditioned component means, shape ``(K, T - t_prime)``."""
        self._ensure_conditioned()
        return self._cond_means

    def conditioned_cholesky_factors(self) -> np.ndarray:
        """Lower Cholesky factors of the conditioned covariances, ``(K, d, d)``."""
        self._ensure_conditioned()
        return self._cond_chols

    def conditioned_covariances(self) -> np.ndarray:
        """Conditioned covariances (Schur complements), shape ``(K, d, d)``."""
        if self._cond_covs is None:
            factors = self.conditioned_cholesky_factors()
            with self._lock:
                if self._cond_covs is None:
                    self._cond_covs = factors @ factors.transpose(0, 2, 1)
        return self._cond_covs

    def conditioned(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Conditioned ``(mean, covariance)`` of component ``k``.

        Raises ``NotPositiveDefinite`` if that component's covariance could
        not be factored.
        """
        k = int(k)
        if not 0 <= k < self.n_components:
            raise OutOfBounds(f"component index {k} outside [0, {self.n_components})")
        if not self._updater.ok[k]:
            raise NotPositiveDefinite(f"component {k} has no valid factorization")
        return self.conditioned_means()[k].copy(), self.conditioned_covariances()[k].copy()

    def as_forecast(self) -> MixtureForecast:
        """Repackage the update as a forecast over the remaining horizon.

        Components with posterior weight exactly 0 (including factorization
        failures) are dropped; the rest keep their conditioned moments and
        renormalized responsibilities.  Useful for chaining further updates.
        """
        gamma = self.gamma.gamma
        keep = np.flatnonzero(self._updater.ok & (gamma > 0))
        means = self.conditioned_means()
        covs = self.conditioned_covariances()
        components = tuple(
            MvnComponent(mean=means[k], cov=DenseCovariance(covs[k])) for k in keep
        )
        weights = gamma[keep] / gamma[keep].sum()
        return MixtureForecast(
            horizon=self.remaining,
            components=components,
            weights=weights,
            instance_id=self._updater.instance_id,
            condition=self._updater.condition,
        )


def log_density(comp: MvnComponent, x) -> float:
    """Log-density of ``x`` under one multivariate-normal component.

    Computed through the covariance's lower Cholesky factor: whitened
    residual for the quadratic form, log of the factor's diagonal for the
    determinant.
    """
    x = _as_vector(x, "x")
    if x.size != comp.horizon:
        raise DimensionMismatch(f"x has length {x.size}, expected {comp.horizon}")
    factor = cholesky_lower(materialize(comp.cov))
    y = _solve_lower(factor, x - comp.mean)
    quad = float(y @ y)
    log_det = 2.0 * float(np.log(np.diagonal(factor)).sum())
    return -0.5 * (comp.horizon * _LOG_2PI + log_det + quad)


def _restrict(cov: CovarianceSpec, start: int, stop: int) -> CovarianceSpec:
    if isinstance(cov, DiagonalCovariance):
        return DiagonalCovariance(sigma=cov.sigma[start:stop])
    if isinstance(cov, DenseCovariance):
        return DenseCovariance(matrix=cov.matrix[start:stop, start:stop])
    return DenseCovariance(matrix=materialize(cov)[start:stop, start:stop])


def marginalize(fc: MixtureForecast, start: int, stop: int) -> MixtureForecast:
    """Restrict a forecast to the contiguous step range ``[start, stop)``.

    Indices are 0-based and half-open.  Diagonal and dense covariances are
    sliced directly; pattern-dictionary covariances are materialized first,
    so their restriction is a dense block.  Weights are unchanged.  The
    full-range call returns the forecast itself.
    """
    start, stop = int(start), int(stop)
    if start >= stop:
        raise EmptyRange(f"range [{start}, {stop}) selects no steps")
    if start < 0 or stop > fc.horizon:
        raise OutOfBounds(f"range [{start}, {stop}) outside the {fc.horizon}-step horizon")
    if start == 0 and stop == fc.horizon:
        return fc
    components = tuple(
        MvnComponent(mean=c.mean[start:stop], cov=_restrict(c.cov, start, stop))
        for c in fc.components
    )
    return MixtureForecast(
        horizon=stop - start,
        components=components,
        weights=fc.weights,
        instance_id=fc.instance_id,
        condition=fc.condition,
    )


def remaining_marginal(fc: MixtureForecast, t_prime: int) -> MixtureForecast:
    """The non-updated baseline: marginal over steps ``t_prime..T-1``."""
    t_prime = int(t_prime)
    if not 0 <= t_prime < fc.horizon:
        raise OutOfBounds(f"t_prime {t_prime} outside [0, {fc.horizon})")
    return marginalize(fc, t_prime, fc.horizon)


def condition_component(comp: MvnComponent, observations) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional of one component given an observed prefix.

    Returns the conditional mean and covariance of the remaining steps:
    the mean is shifted by the cross-covariance acting on the whitened
    observed residual; the covariance is the Schur complement of the
    observed block (obtained as ``L22 @ L22.T`` from the full factor, and
    therefore independent of the observed values).
    """
    obs = _as_vector(observations, "observations")
    t_prime = obs.size
    if not 1 <= t_prime < comp.horizon:
        raise DimensionMismatch(
            f"observed prefix must cover 1..{comp.horizon - 1} steps, got {t_prime}"
        )
    factor = cholesky_lower(materialize(comp.cov))
    y = _solve_lower(factor[:t_prime, :t_prime], obs - comp.mean[:t_prime])
    mean = comp.mean[t_prime:] + _matvec(factor[t_prime:, :t_prime], y)
    tail = factor[t_prime:, t_prime:]
    return mean, tail @ tail.T


def posterior_weights(fc: MixtureForecast, observations) -> PosteriorWeights:
    """Responsibilities of each component for an observed prefix.

    ``gamma_k`` is proportional to ``weight_k`` times the density of the
    observations under component ``k``'s observed-block marginal; an empty
    prefix returns the prior weights unchanged.  Observing the full horizon
    is allowed.
    """
    return ForecastUpdater(fc).posterior(observations)


def update(fc: MixtureForecast, observations) -> IntradayUpdate:
    """Condition a forecast on the first ``len(observations)`` steps.

    For repeated updates of the same forecast build one
    :class:`ForecastUpdater` and call its ``update`` method instead; this
    convenience constructs a fresh workspace each call.
    """
    return ForecastUpdater(fc).update(observations)


def predictive_log_density(upd: IntradayUpdate, x_future) -> float:
    """Log-density of the remaining-horizon mixture at ``x_future``.

    Log-sum-exp stabilized over components, weighting each conditioned
    component's density by its responsibility.  Populates (and thereafter
    reuses) the update's conditioned moments.
    """
    x = _as_vector(x_future, "x_future")
    if x.size != upd.remaining:
        raise DimensionMismatch(f"x_future has length {x.size}, expected {upd.remaining}")
    ok = upd.usable
    gamma = upd.gamma.gamma[ok]
    means = upd.conditioned_means()[ok]
    factors = upd.conditioned_cholesky_factors()[ok]
    y = _solve_lower(factors, x[None, :] - means)
    quad = (y * y).sum(axis=-1)
    log_det = 2.0 * np.log(np.diagonal(factors, axis1=1, axis2=2)).sum(axis=-1)
    log_dens = -0.5 * (upd.remaining * _LOG_2PI + log_det + quad)
    # A component can survive the prefix with positive responsibility yet sit
    # so far from the realized future that its quadratic form overflows; the
    # density has underflowed to zero, so score the term as log(0).
    log_dens[~np.isfinite(log_dens)] = -np.inf
    # Fold the responsibilities into log space rather than passing them as
    # linear-scale weights: a subnormal responsibility attached to the
    # largest density would otherwise overflow the weighted reduction.
    log_gamma = np.full(gamma.shape, -np.inf)
    np.log(gamma, out=log_gamma, where=gamma > 0.0)
    return float(logsumexp(log_gamma + log_dens))


def mixture_mean(upd: IntradayUpdate) -> np.ndarray:
    """Expected value of the remaining horizon: ``sum_k gamma_k mu_k``."""
    ok = upd.usable
    gamma = upd.gamma.gamma[ok]
    means = upd.conditioned_means()[ok]
    return (gamma[:, None] * means).sum(axis=0)
