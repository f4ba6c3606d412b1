"""Evaluation of intraday forecasts over update times.

For every update time ``t_prime`` (number of steps already observed) the
remaining horizon is scored with four metric families:

* ``nll`` — negative mean predictive log-likelihood of the truth,
* ``mae`` — mean absolute error of sampled trajectories, per step
  (the waterfall grid) and averaged over the remaining steps,
* ``crps``/``crps_raw`` — quantile pinball losses summed over a level grid;
  the ``crps`` variant divides by the number of levels so scores are
  comparable across level grids, ``crps_raw`` keeps the plain doubled sum,
* ``rmse`` — per-instance root of the mean squared error of the predictive
  mean, averaged over instances (root first, then average).

Every metric is produced for two variants: ``updated`` (conditioned on the
observed prefix) and ``non_updated`` (the day-ahead marginal over the
remaining steps).  Both variants are computed in one pass over the test set
with shared conditioning work and shared sampling substreams, so comparisons
are exactly paired.  Instances whose update fails numerically are excluded
from both variants and reported, never silently dropped.

A step mask can exclude trailing steps (e.g. an evening window) from the
time-averages of ``mae``/``crps``/``rmse``; masked steps still serve as
conditioning observations, and ``nll`` always uses the full remaining
horizon.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import (
    DimensionMismatch,
    InvalidLevels,
    InvalidS,
    NonFiniteInput,
    NumericalError,
    OutOfBounds,
    ShapeMismatch,
    ValidationError,
)
from .mixture import ForecastUpdater, MixtureForecast, mixture_mean, predictive_log_density
from .sampling import Ensemble, sample_ensemble

__all__ = [
    "DEFAULT_QUANTILE_LEVELS",
    "VARIANTS",
    "DATASET_TAGS",
    "PerformanceTrace",
    "WaterfallGrid",
    "QuantileSet",
    "StepMask",
    "step_mask",
    "EvalInstance",
    "make_test_set",
    "empirical_quantiles",
    "ae_grid",
    "mae_trace",
    "crps_trace",
    "rmse_trace",
    "nll_trace",
    "NllSummary",
    "nll_summary",
    "EvaluationResult",
    "evaluate_test_set",
]

DEFAULT_QUANTILE_LEVELS = np.array([i / 20 for i in range(1, 20)])
VARIANTS = ("updated", "non_updated")
DATASET_TAGS = ("real", "synthetic", "best_case")
_METRICS = ("nll", "mae", "crps", "crps_raw", "rmse")


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ValidationError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return variant


def _check_dataset_tag(tag: str) -> str:
    if tag not in DATASET_TAGS:
        raise ValidationError(f"dataset tag must be one of {DATASET_TAGS}, got {tag!r}")
    return tag


@dataclass(frozen=True, eq=False)
class PerformanceTrace:
    """One metric's values indexed by update time ``t_prime``."""

    metric: str
    variant: str
    dataset: str
    values: dict[int, float]

    def __post_init__(self):
        _check_variant(self.variant)
        _check_dataset_tag(self.dataset)
        if not isinstance(self.metric, str) or not self.metric:
            raise ValidationError("metric name must be a non-empty string")
        clean: dict[int, float] = {}
        for t_prime, value in self.values.items():
            t_prime = int(t_prime)
            if t_prime < 0:
                raise OutOfBounds("trace t_prime keys must be >= 0")
            value = float(value)
            if not np.isfinite(value):
                raise NonFiniteInput(f"trace value at t_prime={t_prime} is not finite")
            clean[t_prime] = value
        object.__setattr__(self, "values", clean)

    def domain(self) -> tuple[int, ...]:
        return tuple(sorted(self.values))

    def as_array(self) -> np.ndarray:
        return np.array([self.values[t] for t in self.domain()])


@dataclass(frozen=True, eq=False)
class WaterfallGrid:
    """Per-step absolute errors keyed by ``(t_prime, t)`` with 1-based ``t``."""

    variant: str
    values: dict[tuple[int, int], float]

    def __post_init__(self):
        _check_variant(self.variant)
        clean: dict[tuple[int, int], float] = {}
        for (t_prime, t), value in self.values.items():
            t_prime, t = int(t_prime), int(t)
            if t_prime < 0 or t <= t_prime:
                raise OutOfBounds(f"grid cell ({t_prime}, {t}) violates t > t_prime >= 0")
            value = float(value)
            if not np.isfinite(value):
                raise NonFiniteInput(f"grid value at ({t_prime}, {t}) is not finite")
            clean[(t_prime, t)] = value
        object.__setattr__(self, "values", clean)

    def t_primes(self) -> tuple[int, ...]:
        return tuple(sorted({tp for tp, _ in self.values}))

    def row(self, t_prime: int) -> dict[int, float]:
        """Values of one update time as ``{t: value}``."""
        return {t: v for (tp, t), v in self.values.items() if tp == t_prime}


def _check_levels(levels) -> np.ndarray:
    arr = np.asarray(levels, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidLevels("levels must be a non-empty vector")
    if not np.isfinite(arr).all():
        raise InvalidLevels("levels must be finite")
    if (arr <= 0).any() or (arr >= 1).any():
        raise InvalidLevels("levels must lie strictly inside (0, 1)")
    if (np.diff(arr) <= 0).any():
        raise InvalidLevels("levels must be strictly increasing")
    return arr


@dataclass(frozen=True, eq=False)
class QuantileSet:
    """Per-step empirical quantiles at a common grid of levels."""

    levels: NDArray[np.float64]
    values: NDArray[np.float64]

    def __post_init__(self):
        levels = _check_levels(self.levels)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != levels.size:
            raise DimensionMismatch("values must have one row per level")
        if not np.isfinite(values).all():
            raise NonFiniteInput("quantile values contain non-finite entries")
        scale = max(1.0, float(np.abs(values).max())) if values.size else 1.0
        if values.shape[0] > 1 and (np.diff(values, axis=0) < -1e-12 * scale).any():
            raise ValidationError("quantile values must be non-decreasing across levels")
        levels = levels.copy()
        values = values.copy()
        levels.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class StepMask:
    """Which 1-based steps ``t`` participate in metric time-averages."""

    include: NDArray[np.bool_]

    def __post_init__(self):
        include = np.array(self.include, dtype=bool, copy=True)
        if include.ndim != 1 or include.size < 1:
            raise DimensionMismatch("mask must be a non-empty boolean vector")
        include.setflags(write=False)
        object.__setattr__(self, "include", include)

    @classmethod
    def all_steps(cls, horizon: int) -> "StepMask":
        return cls(include=np.ones(int(horizon), dtype=bool))

    @classmethod
    def exclude_trailing(cls, horizon: int, n_excluded: int) -> "StepMask":
        """Mask out the last ``n_excluded`` steps of the day."""
        horizon, n_excluded = int(horizon), int(n_excluded)
        if not 0 <= n_excluded <= horizon:
            raise ValidationError(
                f"cannot exclude {n_excluded} of {horizon} steps"
            )
        include = np.ones(horizon, dtype=bool)
        if n_excluded:
            include[horizon - n_excluded :] = False
        return cls(include=include)

    @property
    def horizon(self) -> int:
        return self.include.size

    def includes(self, t: int) -> bool:
        """Whether 1-based step ``t`` participates in time-averages."""
        t = int(t)
        if not 1 <= t <= self.horizon:
            raise OutOfBounds(f"step {t} outside [1, {self.horizon}]")
        return bool(self.include[t - 1])


def step_mask(mask: Optional[StepMask], t: int) -> bool:
    """Whether step ``t`` (1-based) counts toward metric time-averages.

    ``mask=None`` means no exclusion: every step participates.
    """
    if mask is None:
        return int(t) >= 1
    return mask.includes(t)


@dataclass(frozen=True, eq=False)
class EvalInstance:
    """One test-set entry: a day-ahead forecast plus the realized profile."""

    forecast: MixtureForecast
    truth: NDArray[np.float64]

    def __post_init__(self):
        if not isinstance(self.forecast, MixtureForecast):
            raise ValidationError("forecast must be a MixtureForecast")
        if not self.forecast.instance_id:
            raise ValidationError("evaluation requires forecasts with instance ids")
        truth = np.array(self.truth, dtype=np.float64, copy=True)
        if truth.ndim != 1:
            raise DimensionMismatch("truth must be a vector")
        if truth.size != self.forecast.horizon:
            raise DimensionMismatch(
                f"truth length {truth.size} does not match horizon {self.forecast.horizon}"
            )
        if not np.isfinite(truth).all():
            raise NonFiniteInput("truth contains non-finite entries")
        truth.setflags(write=False)
        object.__setattr__(self, "truth", truth)

    @property
    def instance_id(self) -> str:
        return self.forecast.instance_id


def make_test_set(
    forecasts: Iterable[MixtureForecast],
    profiles: Mapping[str, Any],
) -> list[EvalInstance]:
    """Join forecasts with observed profiles by instance id."""
    instances = []
    for fc in forecasts:
        if fc.instance_id not in profiles:
            raise ValidationError(f"no profile for instance {fc.instance_id!r}")
        instances.append(EvalInstance(forecast=fc, truth=profiles[fc.instance_id]))
    return instances


def empirical_quantiles(ens: Ensemble, levels) -> QuantileSet:
    """Per-step empirical quantiles of an ensemble.

    Linear interpolation between order statistics at (1-based) position
    ``q * (S - 1) + 1``; requires at least two traces and levels strictly
    inside ``(0, 1)``.
    """
    levels = _check_levels(levels)
    if ens.n_traces < 2:
        raise InvalidS("empirical quantiles need at least two traces")
    values = np.quantile(ens.trajectories, levels, axis=0)
    return QuantileSet(levels=levels, values=values)


def _checked_tail(inst: EvalInstance, t_prime: int) -> np.ndarray:
    if not 0 <= t_prime < inst.forecast.horizon:
        raise OutOfBounds(f"t_prime {t_prime} outside [0, {inst.forecast.horizon})")
    return inst.truth[t_prime:]


def ae_grid(
    test_set: Sequence[EvalInstance],
    ensembles: Mapping[tuple[str, int], Ensemble],
    t_primes: Optional[Sequence[int]] = None,
    *,
    variant: str = "updated",
) -> WaterfallGrid:
    """Mean absolute error per (update time, step) over instances and traces.

    ``ensembles`` maps ``(instance_id, t_prime)`` to the ensemble drawn for
    that pair; all ensembles of one update time must share the trace count.
    """
    _check_variant(variant)
    if not test_set:
        raise ValidationError("test set is empty")
    ordered = sorted(test_set, key=lambda inst: inst.instance_id)
    if t_primes is None:
        t_primes = sorted({tp for _, tp in ensembles})
    if not t_primes:
        raise ValidationError("no update times to evaluate")
    values: dict[tuple[int, int], float] = {}
    for t_prime in t_primes:
        t_prime = int(t_prime)
        acc = None
        n_traces = None
        for inst in ordered:
            key = (inst.instance_id, t_prime)
            if key not in ensembles:
                raise ValidationError(f"missing ensemble for {key}")
            ens = ensembles[key]
            tail = _checked_tail(inst, t_prime)
            if ens.remaining != tail.size or ens.t_prime != t_prime:
                raise ShapeMismatch(
                    f"ensemble for {key} spans {ens.remaining} steps at t_prime "
                    f"{ens.t_prime}, expected {tail.size} at {t_prime}"
                )
            if n_traces is None:
                n_traces = ens.n_traces
                acc = np.zeros(tail.size)
            elif ens.n_traces != n_traces:
                raise ShapeMismatch(
                    f"ensemble for {key} has {ens.n_traces} traces, expected {n_traces}"
                )
            acc += np.abs(tail[None, :] - ens.trajectories).mean(axis=0)
        acc /= len(test_set)
        for offset, value in enumerate(acc):
            values[(t_prime, t_prime + offset + 1)] = float(value)
    return WaterfallGrid(variant=variant, values=values)


def mae_trace(
    grid: WaterfallGrid,
    mask: Optional[StepMask] = None,
    *,
    dataset_tag: str = "real",
) -> PerformanceTrace:
    """Average grid rows over their (unmasked) remaining steps.

    Update times whose remaining steps are all masked out are omitted from
    the trace domain.
    """
    values: dict[int, float] = {}
    for t_prime in grid.t_primes():
        row = grid.row(t_prime)
        kept = [v for t, v in sorted(row.items()) if step_mask(mask, t)]
        if kept:
            values[t_prime] = float(np.mean(kept))
    return PerformanceTrace(
        metric="mae", variant=grid.variant, dataset=dataset_tag, values=values
    )


def _pinball_sum(levels: np.ndarray, quantile_values: np.ndarray, truth_tail: np.ndarray) -> np.ndarray:
    """Doubled pinball losses summed over levels, one value per step."""
    residual = truth_tail[None, :] - quantile_values
    loss = np.where(residual >= 0, levels[:, None] * residual, (levels[:, None] - 1.0) * residual)
    return 2.0 * loss.sum(axis=0)


def crps_trace(
    test_set: Sequence[EvalInstance],
    quantile_sets: Mapping[tuple[str, int], QuantileSet],
    mask: Optional[StepMask] = None,
    *,
    variant: str = "updated",
    dataset_tag: str = "real",
    t_primes: Optional[Sequence[int]] = None,
) -> tuple[PerformanceTrace, PerformanceTrace]:
    """Quantile-based scores from per-instance quantile sets.

    Returns ``(crps, crps_raw)``: the per-step score is twice the pinball
    loss summed over levels and averaged over instances; ``crps`` then
    averages over (unmasked) remaining steps and divides by the number of
    levels, while ``crps_raw`` keeps the undivided sum.
    """
    _check_variant(variant)
    if not test_set:
        raise ValidationError("test set is empty")
    ordered = sorted(test_set, key=lambda inst: inst.instance_id)
    if t_primes is None:
        t_primes = sorted({tp for _, tp in quantile_sets})
    if not t_primes:
        raise ValidationError("no update times to evaluate")
    levels = None
    norm_values: dict[int, float] = {}
    raw_values: dict[int, float] = {}
    for t_prime in t_primes:
        t_prime = int(t_prime)
        acc = None
        for inst in ordered:
            key = (inst.instance_id, t_prime)
            if key not in quantile_sets:
                raise ValidationError(f"missing quantile set for {key}")
            qs = quantile_sets[key]
            if levels is None:
                levels = qs.levels
            elif qs.levels.shape != levels.shape or not np.array_equal(qs.levels, levels):
                raise ShapeMismatch("all quantile sets must share one level grid")
            tail = _checked_tail(inst, t_prime)
            if qs.values.shape[1] != tail.size:
                raise ShapeMismatch(
                    f"quantile set for {key} spans {qs.values.shape[1]} steps, expected {tail.size}"
                )
            zeta = _pinball_sum(levels, qs.values, tail)
            acc = zeta if acc is None else acc + zeta
        acc /= len(test_set)
        kept = [acc[t - t_prime - 1] for t in range(t_prime + 1, t_prime + acc.size + 1)
                if step_mask(mask, t)]
        if kept:
            raw = float(np.mean(kept))
            raw_values[t_prime] = raw
            norm_values[t_prime] = raw / levels.size
    crps = PerformanceTrace(metric="crps", variant=variant, dataset=dataset_tag, values=norm_values)
    raw = PerformanceTrace(metric="crps_raw", variant=variant, dataset=dataset_tag, values=raw_values)
    return crps, raw


def rmse_trace(
    test_set: Sequence[EvalInstance],
    point_forecasts: Mapping[tuple[str, int], np.ndarray],
    mask: Optional[StepMask] = None,
    *,
    variant: str = "updated",
    dataset_tag: str = "real",
    t_primes: Optional[Sequence[int]] = None,
) -> PerformanceTrace:
    """Root-mean-squared error of predictive means, root before average.

    Each instance contributes the root of its own masked mean squared
    residual; the trace value is the plain average of those roots.
    """
    _check_variant(variant)
    if not test_set:
        raise ValidationError("test set is empty")
    ordered = sorted(test_set, key=lambda inst: inst.instance_id)
    if t_primes is None:
        t_primes = sorted({tp for _, tp in point_forecasts})
    if not t_primes:
        raise ValidationError("no update times to evaluate")
    values: dict[int, float] = {}
    for t_prime in t_primes:
        t_prime = int(t_prime)
        roots = []
        for inst in ordered:
            key = (inst.instance_id, t_prime)
            if key not in point_forecasts:
                raise ValidationError(f"missing point forecast for {key}")
            point = np.asarray(point_forecasts[key], dtype=np.float64)
            tail = _checked_tail(inst, t_prime)
            if point.shape != tail.shape:
                raise ShapeMismatch(
                    f"point forecast for {key} has shape {point.shape}, expected {tail.shape}"
                )
            keep = np.array([step_mask(mask, t) for t in range(t_prime + 1, inst.forecast.horizon + 1)])
            if not keep.any():
                roots = []
                break
            sq = (tail - point) ** 2
            roots.append(float(np.sqrt(sq[keep].mean())))
        if roots:
            values[t_prime] = float(np.mean(roots))
    return PerformanceTrace(
        metric="rmse", variant=variant, dataset=dataset_tag, values=values
    )


@dataclass(frozen=True, eq=False)
class NllSummary:
    """Negative-log-likelihood traces, optionally with per-instance samples."""

    updated: PerformanceTrace
    non_updated: Optional[PerformanceTrace]
    failed: tuple[tuple[str, str], ...]
    gamma_generator: Optional[dict[int, float]]
    samples: Optional[dict[str, np.ndarray]]


def _resolve_t_primes(t_primes, horizon: int) -> list[int]:
    if t_primes is None:
        return list(range(horizon))
    resolved = sorted({int(t) for t in t_primes})
    if not resolved:
        raise ValidationError("t_primes is empty")
    if resolved[0] < 0 or resolved[-1] >= horizon:
        raise OutOfBounds(f"t_primes must lie in [0, {horizon - 1}]")
    return resolved


def _common_horizon(test_set: Sequence[EvalInstance]) -> int:
    if not test_set:
        raise ValidationError("test set is empty")
    horizon = test_set[0].forecast.horizon
    for inst in test_set:
        if inst.forecast.horizon != horizon:
            raise ShapeMismatch("all test-set instances must share one horizon")
    seen = set()
    for inst in test_set:
        if inst.instance_id in seen:
            raise ValidationError(f"duplicate instance id {inst.instance_id!r} in test set")
        seen.add(inst.instance_id)
    return horizon


def _map_instances(jobs, worker, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def nll_summary(
    test_set: Sequence[EvalInstance],
    t_primes: Optional[Sequence[int]] = None,
    *,
    dataset_tag: str = "real",
    threads: int = 1,
    include_non_updated: bool = True,
    generating_components: Optional[Mapping[str, int]] = None,
    return_samples: bool = False,
) -> NllSummary:
    """Negative mean predictive log-likelihood over update times.

    Lighter than :func:`evaluate_test_set`: no sampling, no quantiles.  With
    ``generating_components`` (instance id -> component index) the mean
    posterior weight of each instance's generating component is tracked per
    update time.  ``return_samples`` additionally returns the per-instance
    negative log-likelihood matrices, one row per evaluated instance.
    """
    _check_dataset_tag(dataset_tag)
    horizon = _common_horizon(test_set)
    resolved = _resolve_t_primes(t_primes, horizon)

    def worker(inst: EvalInstance):
        try:
            updater = ForecastUpdater(inst.forecast)
            rows = np.empty((2 if include_non_updated else 1, len(resolved)))
            gamma_row = np.empty(len(resolved)) if generating_components is not None else None
            for j, t_prime in enumerate(resolved):
                upd = updater.update(inst.truth[:t_prime])
                tail = inst.truth[t_prime:]
                rows[0, j] = -predictive_log_density(upd, tail)
                if include_non_updated:
                    nu_upd = updater.marginal_tail(t_prime).update(np.empty(0))
                    rows[1, j] = -predictive_log_density(nu_upd, tail)
                if gamma_row is not None:
                    gamma_row[j] = upd.gamma.gamma[generating_components[inst.instance_id]]
            return ("ok", inst.instance_id, rows, gamma_row)
        except NumericalError as exc:
            return ("failed", inst.instance_id, str(exc), None)

    results = _map_instances(test_set, worker, threads)
    results.sort(key=lambda r: r[1])
    failed = tuple((iid, info) for status, iid, info, _ in results if status == "failed")
    kept = [(rows, gamma_row) for status, _, rows, gamma_row in results if status == "ok"]
    if not kept:
        raise NumericalError("every test-set instance failed to update")
    stacked = np.stack([rows for rows, _ in kept])
    mean_rows = stacked.mean(axis=0)
    updated = PerformanceTrace(
        metric="nll",
        variant="updated",
        dataset=dataset_tag,
        values={t: float(v) for t, v in zip(resolved, mean_rows[0])},
    )
    non_updated = None
    if include_non_updated:
        non_updated = PerformanceTrace(
            metric="nll",
            variant="non_updated",
            dataset=dataset_tag,
            values={t: float(v) for t, v in zip(resolved, mean_rows[1])},
        )
    gamma_generator = None
    if generating_components is not None:
        gamma_mean = np.stack([g for _, g in kept]).mean(axis=0)
        gamma_generator = {t: float(v) for t, v in zip(resolved, gamma_mean)}
    samples = None
    if return_samples:
        samples = {"updated": stacked[:, 0, :]}
        if include_non_updated:
            samples["non_updated"] = stacked[:, 1, :]
    return NllSummary(
        updated=updated,
        non_updated=non_updated,
        failed=failed,
        gamma_generator=gamma_generator,
        samples=samples,
    )


def nll_trace(
    test_set: Sequence[EvalInstance],
    t_primes: Optional[Sequence[int]] = None,
    *,
    variant: str = "updated",
    dataset_tag: str = "real",
    threads: int = 1,
) -> PerformanceTrace:
    """Negative mean predictive log-likelihood for one variant."""
    _check_variant(variant)
    summary = nll_summary(
        test_set,
        t_primes,
        dataset_tag=dataset_tag,
        threads=threads,
        include_non_updated=(variant == "non_updated"),
    )
    return summary.updated if variant == "updated" else summary.non_updated


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    """Everything one evaluation pass produces."""

    traces: dict[tuple[str, str], PerformanceTrace]
    grids: dict[str, WaterfallGrid]
    failed: tuple[tuple[str, str], ...]
    n_instances: int
    n_evaluated: int
    gamma_generator: Optional[dict[int, float]]

    def trace(self, metric: str, variant: str) -> PerformanceTrace:
        return self.traces[(metric, variant)]

    def all_traces(self) -> list[PerformanceTrace]:
        return [self.traces[key] for key in sorted(self.traces)]


def evaluate_test_set(
    test_set: Sequence[EvalInstance],
    *,
    seed: int,
    t_primes: Optional[Sequence[int]] = None,
    s: Optional[int] = None,
    levels=None,
    mask: Optional[StepMask] = None,
    dataset_tag: str = "real",
    threads: int = 1,
    cache: bool = True,
    generating_components: Optional[Mapping[str, int]] = None,
) -> EvaluationResult:
    """Score a test set across update times, updated and non-updated paired.

    For every instance and update time this conditions the forecast, scores
    the truth's likelihood, draws an ensemble (size ``s``, default the
    component count), reduces it to quantiles, and accumulates all metric
    families for both variants.  The two variants share conditioning
    workspaces and sampling substreams, so their comparison is paired; a
    numerically failing instance is excluded from both and reported in
    ``failed``.

    Deterministic given ``(test set, flags, seed)`` — independent of
    ``threads``.
    """
    _check_dataset_tag(dataset_tag)
    horizon = _common_horizon(test_set)
    resolved = _resolve_t_primes(t_primes, horizon)
    levels = _check_levels(DEFAULT_QUANTILE_LEVELS if levels is None else levels)
    if mask is not None and mask.horizon != horizon:
        raise ShapeMismatch(
            f"mask spans {mask.horizon} steps but the test set has horizon {horizon}"
        )
    include = np.ones(horizon, dtype=bool) if mask is None else mask.include

    def worker(inst: EvalInstance):
        try:
            updater = ForecastUpdater(inst.forecast)
            n_traces = inst.forecast.n_components if s is None else int(s)
            nll = np.empty((2, len(resolved)))
            ae_rows: list[np.ndarray] = []
            zeta_rows: list[np.ndarray] = []
            roots = np.full((2, len(resolved)), np.nan)
            gamma_row = np.empty(len(resolved)) if generating_components is not None else None
            for j, t_prime in enumerate(resolved):
                tail = inst.truth[t_prime:]
                keep = include[t_prime:]
                upd = updater.update(inst.truth[:t_prime])
                nu_upd = updater.marginal_tail(t_prime).update(np.empty(0))
                if gamma_row is not None:
                    gamma_row[j] = upd.gamma.gamma[generating_components[inst.instance_id]]
                pair_ae = np.empty((2, tail.size))
                pair_zeta = np.empty((2, tail.size))
                for v, variant_upd in enumerate((upd, nu_upd)):
                    nll[v, j] = -predictive_log_density(variant_upd, tail)
                    ens = sample_ensemble(variant_upd, n_traces, seed, cache=cache)
                    pair_ae[v] = np.abs(tail[None, :] - ens.trajectories).mean(axis=0)
                    quantiles = np.quantile(ens.trajectories, levels, axis=0)
                    pair_zeta[v] = _pinball_sum(levels, quantiles, tail)
                    if keep.any():
                        point = mixture_mean(variant_upd)
                        roots[v, j] = np.sqrt(((tail - point) ** 2)[keep].mean())
                ae_rows.append(pair_ae)
                zeta_rows.append(pair_zeta)
            return ("ok", inst.instance_id, (nll, ae_rows, zeta_rows, roots, gamma_row))
        except NumericalError as exc:
            return ("failed", inst.instance_id, str(exc))

    results = _map_instances(test_set, worker, threads)
    results.sort(key=lambda r: r[1])
    failed = tuple((r[1], r[2]) for r in results if r[0] == "failed")
    kept = [r[2] for r in results if r[0] == "ok"]
    if not kept:
        raise NumericalError("every test-set instance failed to update")
    n_eval = len(kept)

    nll_mean = np.stack([payload[0] for payload in kept]).mean(axis=0)
    gamma_generator = None
    if generating_components is not None:
        gamma_generator = {
            t: float(v)
            for t, v in zip(resolved, np.stack([p[4] for p in kept]).mean(axis=0))
        }

    traces: dict[tuple[str, str], PerformanceTrace] = {}
    grids: dict[str, WaterfallGrid] = {}
    for v, variant in enumerate(VARIANTS):
        traces[("nll", variant)] = PerformanceTrace(
            metric="nll",
            variant=variant,
            dataset=dataset_tag,
            values={t: float(x) for t, x in zip(resolved, nll_mean[v])},
        )
        grid_values: dict[tuple[int, int], float] = {}
        mae_values: dict[int, float] = {}
        crps_values: dict[int, float] = {}
        raw_values: dict[int, float] = {}
        rmse_values: dict[int, float] = {}
        for j, t_prime in enumerate(resolved):
            ae_mean = np.stack([p[1][j][v] for p in kept]).mean(axis=0)
            zeta_mean = np.stack([p[2][j][v] for p in kept]).mean(axis=0)
            keep = include[t_prime:]
            for offset, value in enumerate(ae_mean):
                grid_values[(t_prime, t_prime + offset + 1)] = float(value)
            if keep.any():
                mae_values[t_prime] = float(ae_mean[keep].mean())
                raw = float(zeta_mean[keep].mean())
                raw_values[t_prime] = raw
                crps_values[t_prime] = raw / levels.size
                rmse_values[t_prime] = float(np.mean([p[3][v, j] for p in kept]))
        grids[variant] = WaterfallGrid(variant=variant, values=grid_values)
        traces[("mae", variant)] = PerformanceTrace(
            metric="mae", variant=variant, dataset=dataset_tag, values=mae_values
        )
        traces[("crps", variant)] = PerformanceTrace(
            metric="crps", variant=variant, dataset=dataset_tag, values=crps_values
        )
        traces[("crps_raw", variant)] = PerformanceTrace(
            metric="crps_raw", variant=variant, dataset=dataset_tag, values=raw_values
        )
        traces[("rmse", variant)] = PerformanceTrace(
            metric="rmse", variant=variant, dataset=dataset_tag, values=rmse_values
        )

    return EvaluationResult(
        traces=traces,
        grids=grids,
        failed=failed,
        n_instances=len(test_set),
        n_evaluated=n_eval,
        gamma_generator=gamma_generator,
    )
