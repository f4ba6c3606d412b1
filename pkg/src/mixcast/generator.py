"""Synthetic ground-truth process for exercising the update pipeline.

The generator plays the role of the upstream day-ahead forecaster: it owns a
conditional distribution over daily profiles and can both draw "real" days
from it and emit K-component Gaussian-mixture approximations of itself.

Components are indexed by integer component seeds.  In finite-pool mode the
admissible seeds are ``0..pool_size-1`` and the ground truth is itself a
uniform mixture over those slots, which makes exact oracles possible: an
approximation built from all ``pool_size`` distinct seeds reproduces the
ground-truth distribution exactly.  In infinite mode (``pool_size=None``)
every fresh seed yields fresh component parameters, so no finite mixture is
exact and approximation error is always present.

Each component seed maps to a smooth daily mean (a sum of low-order
sinusoids whose phases and amplitudes respond to the exogenous condition
vector) plus a condition-independent covariance, either diagonal or built
from one shared pattern dictionary.  Everything is a pure function of
``(config, condition, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .covariance import (
    DiagonalCovariance,
    PatternDictionary,
    PdccCovariance,
    cholesky_lower,
    materialize,
)
from .errors import DimensionMismatch, InvalidConfig, NonFiniteInput
from .mixture import MixtureForecast, MvnComponent
from .substreams import derive_seed

__all__ = [
    "GeneratorConfig",
    "GroundTruth",
    "make_ground_truth",
    "approximate_forecast",
    "draw_day",
    "sample_conditions",
]

_TWO_PI = 2.0 * np.pi
_SEED_SPACE = 2**63


@dataclass(frozen=True, eq=False)
class GeneratorConfig:
    """Parameters of the synthetic ground-truth process.

    Parameters
    ----------
    horizon : int
        Steps per day ``T >= 2``.
    n_basis : int
        Number of sinusoidal basis functions in each component's mean.
    amplitude : (float, float)
        Range the basis amplitudes are drawn from; the j-th harmonic is
        damped by ``1/(j+1)`` so profiles stay smooth.
    noise_scale : (float, float)
        Range of the per-direction noise scales (dictionary auxiliary
        scales for ``pdcc``, per-step standard deviations for ``diagonal``).
    covariance : {"pdcc", "diagonal"}
        Covariance style of every emitted component.
    dictionary_size : int, optional
        Number of dictionary patterns ``V >= horizon`` (pdcc only);
        defaults to ``3 * horizon / 2`` rounded up.
    ridge : float
        Diagonal ridge of pdcc covariances.
    condition_dim : int
        Length of the exogenous condition vectors.
    pool_size : int or None
        Number of components in the finite ground-truth pool, or None for
        an infinite pool with fresh parameters per component seed.
    seed : int
        Root seed freezing the dictionary and all component parameters.
    """

    horizon: int
    n_basis: int = 4
    amplitude: tuple[float, float] = (0.4, 1.6)
    noise_scale: tuple[float, float] = (0.08, 0.35)
    covariance: str = "pdcc"
    dictionary_size: Optional[int] = None
    ridge: float = 1e-4
    condition_dim: int = 2
    pool_size: Optional[int] = 64
    seed: int = 0

    def __post_init__(self):
        if int(self.horizon) < 2:
            raise InvalidConfig("horizon must be >= 2")
        object.__setattr__(self, "horizon", int(self.horizon))
        if int(self.n_basis) < 1:
            raise InvalidConfig("n_basis must be >= 1")
        object.__setattr__(self, "n_basis", int(self.n_basis))
        for name in ("amplitude", "noise_scale"):
            pair = tuple(float(x) for x in getattr(self, name))
            if len(pair) != 2 or not all(np.isfinite(pair)):
                raise InvalidConfig(f"{name} must be a finite (low, high) pair")
            if pair[0] <= 0 or pair[1] < pair[0]:
                raise InvalidConfig(f"{name} must satisfy 0 < low <= high")
            object.__setattr__(self, name, pair)
        if self.covariance not in ("pdcc", "diagonal"):
            raise InvalidConfig(
                f"covariance must be 'pdcc' or 'diagonal', got {self.covariance!r}"
            )
        if self.covariance == "pdcc":
            size = self.dictionary_size
            if size is None:
                size = self.horizon + (self.horizon + 1) // 2
            size = int(size)
            if size < self.horizon:
                raise InvalidConfig(
                    f"dictionary_size {size} must be >= horizon {self.horizon}"
                )
            object.__setattr__(self, "dictionary_size", size)
        elif self.dictionary_size is not None:
            raise InvalidConfig("dictionary_size only applies to pdcc covariances")
        ridge = float(self.ridge)
        if not np.isfinite(ridge) or ridge < 0:
            raise InvalidConfig("ridge must be finite and >= 0")
        object.__setattr__(self, "ridge", ridge)
        if int(self.condition_dim) < 1:
            raise InvalidConfig("condition_dim must be >= 1")
        object.__setattr__(self, "condition_dim", int(self.condition_dim))
        if self.pool_size is not None:
            if int(self.pool_size) < 1:
                raise InvalidConfig("pool_size must be >= 1 (or None for infinite)")
            object.__setattr__(self, "pool_size", int(self.pool_size))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True, eq=False)
class _ComponentParams:
    """Condition-independent parameters of one component seed."""

    offset: float
    amplitudes: NDArray[np.float64]
    phases: NDArray[np.float64]
    phase_coupling: NDArray[np.float64]
    amp_coupling: NDArray[np.float64]
    scales: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """A frozen ground-truth process; all queries are deterministic.

    ``component(condition, component_seed)`` maps an exogenous condition and
    an integer component seed to a Gaussian component; in finite-pool mode
    the valid seeds are ``0..pool_size-1``.
    """

    config: GeneratorConfig
    dictionary: Optional[PatternDictionary]
    _pool: Optional[tuple[_ComponentParams, ...]]

    @property
    def pool_size(self) -> Optional[int]:
        return self.config.pool_size

    def _params(self, component_seed: int) -> _ComponentParams:
        component_seed = int(component_seed)
        if self._pool is not None:
            if not 0 <= component_seed < len(self._pool):
                raise InvalidConfig(
                    f"component seed {component_seed} outside the finite pool "
                    f"[0, {len(self._pool)})"
                )
            return self._pool[component_seed]
        return _component_params(self.config, component_seed)

    def _check_condition(self, condition) -> np.ndarray:
        cond = np.asarray(condition, dtype=np.float64).reshape(-1)
        if cond.size != self.config.condition_dim:
            raise DimensionMismatch(
                f"condition has {cond.size} entries, expected {self.config.condition_dim}"
            )
        if not np.isfinite(cond).all():
            raise NonFiniteInput("condition contains non-finite entries")
        return cond

    def mean_profile(self, condition, component_seed: int) -> np.ndarray:
        """The component's smooth daily mean under the given condition."""
        cond = self._check_condition(condition)
        params = self._params(component_seed)
        cfg = self.config
        tgrid = (np.arange(cfg.horizon) + 0.5) / cfg.horizon
        phases = params.phases + params.phase_coupling @ cond
        amps = params.amplitudes * (1.0 + 0.15 * np.tanh(params.amp_coupling @ cond))
        harmonics = np.arange(1, cfg.n_basis + 1)
        waves = np.sin(_TWO_PI * harmonics[:, None] * tgrid[None, :] + phases[:, None])
        return params.offset + amps @ waves

    def component(self, condition, component_seed: int) -> MvnComponent:
        """The Gaussian component for ``(condition, component_seed)``."""
        mean = self.mean_profile(condition, component_seed)
        params = self._params(component_seed)
        if self.config.covariance == "pdcc":
            cov = PdccCovariance(
                dictionary=self.dictionary,
                aux_sigma=params.scales,
                ridge=self.config.ridge,
            )
        else:
            cov = DiagonalCovariance(sigma=params.scales)
        return MvnComponent(mean=mean, cov=cov)


def _component_params(cfg: GeneratorConfig, component_seed: int) -> _ComponentParams:
    rng = np.random.default_rng(derive_seed(cfg.seed, "component", int(component_seed)))
    lo, hi = cfg.amplitude
    damping = 1.0 + np.arange(cfg.n_basis)
    n_scales = cfg.dictionary_size if cfg.covariance == "pdcc" else cfg.horizon
    nlo, nhi = cfg.noise_scale
    return _ComponentParams(
        offset=float(rng.uniform(0.5, 1.5)),
        amplitudes=rng.uniform(lo, hi, size=cfg.n_basis) / damping,
        phases=rng.uniform(0.0, _TWO_PI, size=cfg.n_basis),
        phase_coupling=rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size=(cfg.n_basis, cfg.condition_dim)),
        amp_coupling=rng.uniform(-1.0, 1.0, size=(cfg.n_basis, cfg.condition_dim)),
        scales=rng.uniform(nlo, nhi, size=n_scales),
    )


def _make_dictionary(cfg: GeneratorConfig) -> PatternDictionary:
    rng = np.random.default_rng(derive_seed(cfg.seed, "dictionary"))
    tgrid = (np.arange(cfg.horizon) + 0.5) / cfg.horizon
    max_freq = max(2, cfg.horizon // 2)
    columns = np.empty((cfg.horizon, cfg.dictionary_size))
    for v in range(cfg.dictionary_size):
        freq = v % max_freq + 1
        phase = rng.uniform(0.0, _TWO_PI)
        col = np.sin(_TWO_PI * freq * tgrid + phase)
        col += 0.25 * rng.standard_normal(cfg.horizon)
        columns[:, v] = col / np.linalg.norm(col)
    return PatternDictionary(id=f"gt-dict-{cfg.seed}", u=columns)


def make_ground_truth(cfg: GeneratorConfig) -> GroundTruth:
    """Freeze dictionary and component parameters from the config seed."""
    dictionary = _make_dictionary(cfg) if cfg.covariance == "pdcc" else None
    pool = None
    if cfg.pool_size is not None:
        pool = tuple(_component_params(cfg, m) for m in range(cfg.pool_size))
    return GroundTruth(config=cfg, dictionary=dictionary, _pool=pool)


def _draw_component_seeds(gt: GroundTruth, k: int, rng: np.random.Generator) -> list[int]:
    """K distinct component seeds; prefixes are nested across K."""
    if gt.pool_size is not None:
        if k > gt.pool_size:
            raise InvalidConfig(
                f"cannot draw {k} distinct components from a pool of {gt.pool_size}"
            )
        return [int(m) for m in rng.permutation(gt.pool_size)[:k]]
    seeds: list[int] = []
    seen = set()
    while len(seeds) < k:
        value = int(rng.integers(0, _SEED_SPACE))
        if value not in seen:
            seen.add(value)
            seeds.append(value)
    return seeds


def approximate_forecast(
    gt: GroundTruth,
    condition,
    k: int,
    seed: int,
    *,
    instance_id: str = "",
) -> MixtureForecast:
    """A uniform-weight K-component mixture approximation of the truth.

    Draws K distinct component seeds and maps each to its Gaussian
    component.  The seed draw does not depend on K, so forecasts built from
    the same ``seed`` with growing K extend each other's component sets.
    """
    k = int(k)
    if k < 1:
        raise InvalidConfig("a forecast needs at least one component")
    rng = np.random.default_rng(seed)
    component_seeds = _draw_component_seeds(gt, k, rng)
    components = [gt.component(condition, cs) for cs in component_seeds]
    return MixtureForecast.uniform(
        components, instance_id=instance_id, condition=np.asarray(condition, dtype=np.float64)
    )


def draw_day(gt: GroundTruth, condition, seed: int) -> tuple[np.ndarray, int]:
    """One realized daily profile plus the component seed that produced it.

    Picks a component seed (uniformly over the finite pool, or fresh in
    infinite mode), then draws one trajectory from that component.
    """
    rng = np.random.default_rng(seed)
    if gt.pool_size is not None:
        component_seed = int(rng.integers(0, gt.pool_size))
    else:
        component_seed = int(rng.integers(0, _SEED_SPACE))
    comp = gt.component(condition, component_seed)
    factor = cholesky_lower(materialize(comp.cov))
    profile = comp.mean + factor @ rng.standard_normal(gt.config.horizon)
    return profile, component_seed


def sample_conditions(gt: GroundTruth, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` exogenous condition vectors, uniform over ``[-1, 1]``."""
    n = int(n)
    if n < 1:
        raise InvalidConfig("need at least one condition")
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(n, gt.config.condition_dim))
