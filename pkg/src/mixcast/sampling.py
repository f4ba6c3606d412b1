"""Hierarchical ensemble sampling from updated mixtures.

Each trace draws a component index from the posterior responsibilities, then
draws from that component's conditioned normal via its Cholesky factor.  All
randomness comes from counter-based per-trace substreams keyed by
``(seed, instance_id, trace index)`` (see :mod:`mixcast.substreams`), so

* identical seeds give bit-identical ensembles,
* results are independent of scheduling and thread count, and
* caching cannot perturb the draws — the substream for trace ``s`` is fixed
  before any conditioning happens.

With ``cache=True`` (the default) the conditioned means and factors are
computed once per component on the update object and reused by every trace.
With ``cache=False`` every trace refactors its selected component's full
day-ahead covariance and reconditions it from scratch — the uncached
algorithm taken literally — which is substantially slower but produces the
same bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtri

from .covariance import cholesky_lower
from .errors import InvalidS, NumericalError, ValidationError
from .mixture import ForecastUpdater, IntradayUpdate, MixtureForecast, _matvec, _solve_lower
from .substreams import trace_raw, uniform_from_raw

__all__ = ["Ensemble", "sample_ensemble", "sample_day_ahead"]


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``S`` equiprobable trajectories over the remaining horizon.

    Attributes
    ----------
    trajectories : ndarray of shape (S, T - t_prime)
        One sampled remaining-horizon path per row.
    components : ndarray of shape (S,), int64
        The mixture component each trace was drawn from.
    t_prime : int
        Number of observed steps the ensemble is conditioned on.
    seed : int
        The seed the ensemble was drawn with.
    source_id : str
        Instance identifier of the source forecast.
    """

    trajectories: NDArray[np.float64]
    components: NDArray[np.int64]
    t_prime: int
    seed: int
    source_id: str

    def __post_init__(self):
        trajectories = np.asarray(self.trajectories, dtype=np.float64)
        components = np.asarray(self.components, dtype=np.int64)
        if trajectories.ndim != 2 or trajectories.shape[0] < 1:
            raise ValidationError("trajectories must be a non-empty (S, d) matrix")
        if components.shape != (trajectories.shape[0],):
            raise ValidationError("components must hold one index per trace")
        if not np.isfinite(trajectories).all():
            raise NumericalError("sampled trajectories contain non-finite values")
        trajectories.setflags(write=False)
        components.setflags(write=False)
        object.__setattr__(self, "trajectories", trajectories)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "t_prime", int(self.t_prime))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_traces(self) -> int:
        return self.trajectories.shape[0]

    @property
    def remaining(self) -> int:
        return self.trajectories.shape[1]


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError("an explicit integer seed is required for sampling")
    return int(seed)


def _check_sample_count(s, default: int) -> int:
    if s is None:
        return default
    if isinstance(s, bool) or not isinstance(s, (int, np.integer)) or int(s) < 1:
        raise InvalidS(f"ensemble size must be a positive integer, got {s!r}")
    return int(s)


def sample_ensemble(
    upd: IntradayUpdate,
    s: int | None = None,
    seed: int | None = None,
    *,
    cache: bool = True,
) -> Ensemble:
    """Draw ``s`` trajectories from an updated mixture.

    Parameters
    ----------
    upd : IntradayUpdate
        The conditioned forecast to sample from.
    s : int, optional
        Ensemble size; defaults to the number of mixture components.
    seed : int
        Seed for the per-trace substreams (required; keyword or positional).
    cache : bool
        Reuse conditioned per-component moments across traces (default).
        ``cache=False`` recomputes the conditioning per trace from the full
        day-ahead covariance; the trajectories are bit-identical either way.
    """
    seed = _check_seed(seed)
    n_traces = _check_sample_count(s, upd.n_components)
    d = upd.remaining
    t_prime = upd.t_prime

    raw = trace_raw(seed, upd.instance_id, n_traces, 1 + d)
    u_pick = uniform_from_raw(raw[:, 0])
    z = ndtri(uniform_from_raw(raw[:, 1:], open_interval=True))

    cdf = np.cumsum(upd.gamma.gamma)
    cdf[-1] = 1.0
    picks = np.searchsorted(cdf, u_pick, side="right").astype(np.int64)

    if cache:
        means = upd.conditioned_means()[picks]
        factors = upd.conditioned_cholesky_factors()[picks]
        trajectories = means + _matvec(factors, z)
    else:
        updater = upd.updater
        obs = upd.observations
        trajectories = np.empty((n_traces, d))
        for i in range(n_traces):
            k = int(picks[i])
            factor = cholesky_lower(updater.sigmas[k])
            mean_tail = updater.means[k, t_prime:]
            if t_prime:
                y = _solve_lower(factor[:t_prime, :t_prime], obs - updater.means[k, :t_prime])
                mean_tail = mean_tail + _matvec(factor[t_prime:, :t_prime], y)
            trajectories[i] = mean_tail + _matvec(factor[t_prime:, t_prime:], z[i])

    return Ensemble(
        trajectories=trajectories,
        components=picks,
        t_prime=t_prime,
        seed=seed,
        source_id=upd.instance_id,
    )


def sample_day_ahead(
    fc: MixtureForecast,
    s: int | None = None,
    seed: int | None = None,
) -> Ensemble:
    """Draw trajectories from a day-ahead forecast (no observations yet)."""
    upd = ForecastUpdater(fc).update(np.empty(0))
    return sample_ensemble(upd, s, seed)
