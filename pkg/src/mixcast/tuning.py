"""Choosing the component count K for approximate forecasts.

A forecast with too few components misses modes of the day-ahead
distribution; one with too many spends capacity on modes the data never
visits.  Neither shows up directly in a single likelihood number, so K is
chosen by comparing two negative-log-likelihood traces for each candidate:

* best-case — the truth is drawn from the K-component forecast itself, so
  the forecast is exactly right and its trace is the attainable floor;
* synthetic — the truth is drawn from the ground-truth generator that the
  forecast only approximates.

The gap between the traces, averaged over update times, measures how much
of the apparent skill survives model misspecification.  The selected K
minimizes that gap; ties go to the smallest K.

All candidates are scored on common random numbers: one synthetic truth per
instance shared across the whole grid, per-instance selection streams that
do not depend on K, and nested component subsets (the K-component forecast's
pool slots are a prefix of the K'-component one's for K < K').
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidConfig, NonFiniteInput, ValidationError
from .generator import GroundTruth, approximate_forecast, draw_day
from .metrics import EvalInstance, PerformanceTrace, nll_summary
from .mixture import MixtureForecast
from .sampling import sample_day_ahead
from .substreams import derive_seed

__all__ = [
    "BestCaseSet",
    "SynthDraw",
    "TuningReport",
    "build_best_case_set",
    "build_synthetic_set",
    "select_k",
]


@dataclass(frozen=True, eq=False)
class BestCaseSet:
    """Forecasts paired with truths drawn from those same forecasts.

    ``generating`` maps each instance id to the index of the component the
    truth was drawn from, for tracking how fast the update re-identifies it.
    """

    instances: tuple[EvalInstance, ...]
    generating: dict[str, int]

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        for inst in self.instances:
            if inst.instance_id not in self.generating:
                raise ValidationError(
                    f"no generating component recorded for {inst.instance_id!r}"
                )


@dataclass(frozen=True, eq=False)
class SynthDraw:
    """One synthetic day: condition, realized profile, generating pool slot."""

    instance_id: str
    condition: np.ndarray
    truth: np.ndarray
    component: int


def build_best_case_set(
    forecasts: Sequence[MixtureForecast], seed: int
) -> BestCaseSet:
    """Draw one truth per forecast from the forecast itself.

    The per-instance substreams are keyed by instance id, so adding or
    reordering forecasts does not change any instance's truth.
    """
    truth_seed = derive_seed(seed, "best-case-truth")
    instances = []
    generating: dict[str, int] = {}
    for fc in forecasts:
        ens = sample_day_ahead(fc, 1, truth_seed)
        instances.append(EvalInstance(forecast=fc, truth=ens.trajectories[0]))
        generating[fc.instance_id] = int(ens.components[0])
    return BestCaseSet(instances=tuple(instances), generating=generating)


def build_synthetic_set(
    gt: GroundTruth,
    conditions,
    seed: int,
    *,
    instance_ids: Optional[Sequence[str]] = None,
) -> list[SynthDraw]:
    """Draw one day per condition from the ground-truth generator."""
    conditions = np.atleast_2d(np.asarray(conditions, dtype=np.float64))
    if instance_ids is None:
        instance_ids = [f"tune-{i:04d}" for i in range(conditions.shape[0])]
    elif len(instance_ids) != conditions.shape[0]:
        raise ValidationError("one instance id per condition is required")
    draws = []
    for iid, condition in zip(instance_ids, conditions):
        truth, component = draw_day(gt, condition, derive_seed(seed, "synthetic-truth", iid))
        draws.append(
            SynthDraw(
                instance_id=iid,
                condition=condition.copy(),
                truth=truth,
                component=component,
            )
        )
    return draws


@dataclass(frozen=True, eq=False)
class TuningReport:
    """Gap per candidate K, the selected K, and the underlying traces."""

    k_grid: tuple[int, ...]
    gap: dict[int, float]
    k_star: int
    traces: dict[int, dict[str, PerformanceTrace]]

    def __post_init__(self):
        k_grid = tuple(int(k) for k in self.k_grid)
        object.__setattr__(self, "k_grid", k_grid)
        if set(self.gap) != set(k_grid):
            raise ValidationError("gap must cover exactly the candidate grid")
        for k, value in self.gap.items():
            if not np.isfinite(value):
                raise NonFiniteInput(f"gap at K={k} is not finite")
        if self.k_star not in k_grid:
            raise ValidationError(f"selected K={self.k_star} is not on the grid")


def _gap(best: PerformanceTrace, synth: PerformanceTrace) -> float:
    """Mean absolute trace difference over the common update times."""
    domain = best.domain()
    if domain != synth.domain():
        raise ValidationError("gap requires traces over identical update times")
    diffs = [abs(best.values[t] - synth.values[t]) for t in domain]
    return float(np.mean(diffs))


def _argmin_smallest(k_grid: Sequence[int], gap: dict[int, float]) -> int:
    best_k, best_value = None, None
    for k in sorted(k_grid):
        value = gap[k]
        if best_value is None or value < best_value:
            best_k, best_value = k, value
    return best_k


def select_k(
    k_grid: Sequence[int],
    gt: GroundTruth,
    conditions,
    seed: int,
    *,
    t_primes: Optional[Sequence[int]] = None,
    threads: int = 1,
) -> TuningReport:
    """Score every candidate K and select the one with the smallest gap.

    For each candidate, per-condition forecasts are built with K components
    (selection streams independent of K, so candidates share pool slots as
    nested prefixes), then scored against the shared synthetic truths and
    against best-case truths drawn from the forecasts themselves.  The gap
    is the mean absolute difference of the two negative-log-likelihood
    traces over update times 1..T-1; ties break toward the smaller K.
    """
    k_grid = sorted({int(k) for k in k_grid})
    if not k_grid:
        raise ValidationError("candidate grid is empty")
    if k_grid[0] < 1:
        raise InvalidConfig("candidate component counts must be >= 1")
    if gt.pool_size is not None and k_grid[-1] > gt.pool_size:
        raise InvalidConfig(
            f"candidate K={k_grid[-1]} exceeds the generator pool size {gt.pool_size}"
        )
    conditions = np.atleast_2d(np.asarray(conditions, dtype=np.float64))
    horizon = gt.config.horizon
    if t_primes is None:
        t_primes = range(1, horizon)
    instance_ids = [f"tune-{i:04d}" for i in range(conditions.shape[0])]
    synth_draws = build_synthetic_set(gt, conditions, seed, instance_ids=instance_ids)

    gap: dict[int, float] = {}
    traces: dict[int, dict[str, PerformanceTrace]] = {}
    for k in k_grid:
        forecasts = [
            approximate_forecast(
                gt,
                condition,
                k,
                derive_seed(seed, "forecast", iid),
                instance_id=iid,
            )
            for iid, condition in zip(instance_ids, conditions)
        ]
        synth_set = [
            EvalInstance(forecast=fc, truth=draw.truth)
            for fc, draw in zip(forecasts, synth_draws)
        ]
        synth_trace = nll_summary(
            synth_set,
            t_primes,
            dataset_tag="synthetic",
            threads=threads,
            include_non_updated=False,
        ).updated
        best_case = build_best_case_set(forecasts, seed)
        best_trace = nll_summary(
            list(best_case.instances),
            t_primes,
            dataset_tag="best_case",
            threads=threads,
            include_non_updated=False,
        ).updated
        gap[k] = _gap(best_trace, synth_trace)
        traces[k] = {"best_case": best_trace, "synthetic": synth_trace}

    return TuningReport(
        k_grid=tuple(k_grid),
        gap=gap,
        k_star=_argmin_smallest(k_grid, gap),
        traces=traces,
    )
