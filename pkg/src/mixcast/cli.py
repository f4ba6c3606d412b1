"""Command-line front end.

Subcommands: ``gen`` (synthetic datasets and model files), ``update``
(condition one instance on an observed prefix), ``sample`` (draw an
ensemble), ``evaluate`` (trace/grid tables for both variants), and
``tune-k`` (component-count selection).

Conventions: data goes to files or standard output, diagnostics go to
standard error, and every command that draws random numbers requires an
explicit ``--seed``.  Exit codes: 0 success, 1 invalid flags or file
content, 2 numerical failure, 3 file-system failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .generator import (
    approximate_forecast,
    draw_day,
    make_ground_truth,
    sample_conditions,
)
from .io import (
    read_generator_config,
    read_model,
    read_profiles,
    write_components,
    write_conditions,
    write_ensemble,
    write_grid,
    write_model,
    write_profiles,
    write_trace,
    write_tuning_report,
)
from .metrics import (
    DATASET_TAGS,
    DEFAULT_QUANTILE_LEVELS,
    StepMask,
    evaluate_test_set,
    make_test_set,
)
from .mixture import ForecastUpdater
from .sampling import sample_ensemble
from .substreams import derive_seed
from .tuning import build_best_case_set, select_k

__all__ = ["main"]

_DEFAULT_K_GRID = "2,5,10,25,50,100"


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_int_list(text: str, flag: str) -> list[int]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ValidationError(f"{flag} must list at least one integer")
    try:
        return [int(part) for part in items]
    except ValueError:
        raise ValidationError(f"{flag} must be a comma-separated list of integers, got {text!r}")


def _parse_float_list(text: str, flag: str) -> list[float]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise ValidationError(f"{flag} must list at least one number")
    try:
        return [float(part) for part in items]
    except ValueError:
        raise ValidationError(f"{flag} must be a comma-separated list of numbers, got {text!r}")


def _parse_t_primes(text: Optional[str]) -> Optional[list[int]]:
    """``None`` (all), a single update time ``"3"``, or a half-open range ``"0:8"``."""
    if text is None:
        return None
    text = text.strip()
    if ":" in text:
        start_text, _, stop_text = text.partition(":")
        try:
            start, stop = int(start_text), int(stop_text)
        except ValueError:
            raise ValidationError(f"--t-prime range must look like start:stop, got {text!r}")
        if stop <= start:
            raise ValidationError(f"--t-prime range {text!r} selects no update times")
        return list(range(start, stop))
    try:
        return [int(text)]
    except ValueError:
        raise ValidationError(f"--t-prime must be an integer or start:stop range, got {text!r}")


def _find_instance(forecasts, instance_id: str):
    for fc in forecasts:
        if fc.instance_id == instance_id:
            return fc
    known = ", ".join(fc.instance_id for fc in forecasts[:8])
    raise ValidationError(
        f"no instance {instance_id!r} in the model file (instances start with: {known})"
    )


def _instance_truth(profiles, instance_id: str, horizon: int) -> np.ndarray:
    if instance_id not in profiles:
        raise ValidationError(f"no profile for instance {instance_id!r}")
    truth = profiles[instance_id]
    if truth.size != horizon:
        raise ValidationError(
            f"profile for {instance_id!r} has {truth.size} steps, model horizon is {horizon}"
        )
    return truth


def _cmd_gen(args) -> int:
    cfg = read_generator_config(args.config)
    gt = make_ground_truth(cfg)
    n, k = int(args.n), int(args.k)
    if n < 1:
        raise ValidationError("--n must be >= 1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    conditions = sample_conditions(gt, n, derive_seed(args.seed, "conditions"))
    instance_ids = [f"inst-{i:04d}" for i in range(n)]
    forecasts = [
        approximate_forecast(
            gt, condition, k, derive_seed(args.seed, "forecast", iid), instance_id=iid
        )
        for iid, condition in zip(instance_ids, conditions)
    ]

    components = None
    if args.kind == "best-case":
        best = build_best_case_set(forecasts, args.seed)
        profiles = {inst.instance_id: inst.truth for inst in best.instances}
        components = best.generating
    else:
        profiles = {}
        for iid, condition in zip(instance_ids, conditions):
            truth, _ = draw_day(gt, condition, derive_seed(args.seed, f"{args.kind}-truth", iid))
            profiles[iid] = truth

    write_model(forecasts, out_dir / "model.json")
    write_profiles(profiles, out_dir / "profiles.csv")
    write_conditions(dict(zip(instance_ids, conditions)), out_dir / "conditions.csv")
    written = ["model.json", "profiles.csv", "conditions.csv"]
    if components is not None:
        write_components(components, out_dir / "components.csv")
        written.append("components.csv")
    _diag(
        f"wrote {', '.join(written)} to {out_dir} "
        f"({n} instances, K={k}, T={cfg.horizon}, kind={args.kind})"
    )
    return 0


def _cmd_update(args) -> int:
    forecasts = read_model(args.model)
    fc = _find_instance(forecasts, args.instance)
    truth = _instance_truth(read_profiles(args.profiles), args.instance, fc.horizon)
    t_prime = int(args.t_prime)
    updater = ForecastUpdater(fc)
    upd = updater.update(truth[:t_prime])
    usable = np.flatnonzero(upd.usable)
    means = upd.conditioned_means()
    covs = upd.conditioned_covariances()
    doc = {
        "instance": fc.instance_id,
        "horizon": fc.horizon,
        "t_prime": t_prime,
        "remaining": upd.remaining,
        "gamma": upd.gamma.gamma.tolist(),
        "components": [
            {
                "index": int(k),
                "weight": float(upd.gamma.gamma[k]),
                "mean": means[k].tolist(),
                "cov": covs[k].tolist(),
            }
            for k in usable
        ],
    }
    print(json.dumps(doc, indent=2, allow_nan=False))
    return 0


def _cmd_sample(args) -> int:
    forecasts = read_model(args.model)
    fc = _find_instance(forecasts, args.instance)
    truth = _instance_truth(read_profiles(args.profiles), args.instance, fc.horizon)
    t_prime = int(args.t_prime)
    upd = ForecastUpdater(fc).update(truth[:t_prime])
    ens = sample_ensemble(upd, args.s, args.seed, cache=not args.no_cache)
    write_ensemble(ens, args.out)
    _diag(
        f"wrote {ens.n_traces} traces x {ens.remaining} steps for {fc.instance_id} "
        f"at t_prime={t_prime} to {args.out}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    forecasts = read_model(args.model)
    profiles = read_profiles(args.profiles)
    test_set = make_test_set(forecasts, profiles)
    levels = (
        DEFAULT_QUANTILE_LEVELS
        if args.levels is None
        else np.array(_parse_float_list(args.levels, "--levels"))
    )
    horizon = test_set[0].forecast.horizon
    mask = (
        None
        if not args.mask_exclude_last
        else StepMask.exclude_trailing(horizon, args.mask_exclude_last)
    )
    result = evaluate_test_set(
        test_set,
        seed=args.seed,
        t_primes=_parse_t_primes(args.t_prime),
        s=args.s,
        levels=levels,
        mask=mask,
        dataset_tag=args.dataset_tag,
        threads=args.threads,
        cache=not args.no_cache,
    )
    write_trace(result.all_traces(), args.out_traces)
    write_grid([result.grids[v] for v in sorted(result.grids)], args.out_grid)
    _diag(
        f"evaluated {result.n_evaluated}/{result.n_instances} instances; "
        f"wrote {args.out_traces} and {args.out_grid}"
    )
    for instance_id, reason in result.failed:
        _diag(f"excluded {instance_id}: {reason}")
    return 0


def _cmd_tune_k(args) -> int:
    cfg = read_generator_config(args.config)
    gt = make_ground_truth(cfg)
    n = int(args.n)
    if n < 1:
        raise ValidationError("--n must be >= 1")
    k_grid = _parse_int_list(args.k_grid, "--k-grid")
    conditions = sample_conditions(gt, n, derive_seed(args.seed, "conditions"))
    report = select_k(k_grid, gt, conditions, args.seed, threads=args.threads)
    write_tuning_report(report, args.out)
    gaps = ", ".join(f"K={k}: {report.gap[k]:.4f}" for k in report.k_grid)
    _diag(f"gap by candidate — {gaps}")
    _diag(f"selected K={report.k_star}; wrote {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixcast",
        description=(
            "Intraday updating of Gaussian-mixture day-ahead forecasts: generate "
            "synthetic datasets, condition on observed prefixes, sample ensembles, "
            "evaluate, and tune the component count."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    gen = sub.add_parser(
        "gen",
        help="generate a synthetic dataset and matching model file",
        description=(
            "Build a ground-truth process from a generator config, draw per-instance "
            "forecasts and daily profiles, and write model.json, profiles.csv, "
            "conditions.csv (and components.csv for best-case) into --out-dir."
        ),
    )
    gen.add_argument("--config", required=True, help="generator config JSON")
    gen.add_argument("--n", type=int, default=16, help="number of instances (default 16)")
    gen.add_argument("--k", type=int, required=True, help="components per forecast")
    gen.add_argument(
        "--kind",
        choices=("real", "synthetic", "best-case"),
        default="synthetic",
        help="truth source: ground-truth draws (real/synthetic) or forecast draws (best-case)",
    )
    gen.add_argument("--seed", type=int, required=True, help="random seed")
    gen.add_argument("--out-dir", required=True, help="output directory")
    gen.set_defaults(func=_cmd_gen)

    update = sub.add_parser(
        "update",
        help="condition one instance on an observed prefix",
        description=(
            "Update one instance's forecast with the first t_prime steps of its "
            "profile and print posterior weights and conditioned moments as JSON."
        ),
    )
    update.add_argument("--model", required=True, help="model JSON file")
    update.add_argument("--profiles", required=True, help="profiles CSV file")
    update.add_argument("--instance", required=True, help="instance id")
    update.add_argument("--t-prime", type=int, required=True, help="observed steps")
    update.set_defaults(func=_cmd_update)

    sample = sub.add_parser(
        "sample",
        help="draw an ensemble from an updated forecast",
        description=(
            "Update one instance, then draw S trajectories over the remaining steps "
            "and write them as an ensemble CSV."
        ),
    )
    sample.add_argument("--model", required=True, help="model JSON file")
    sample.add_argument("--profiles", required=True, help="profiles CSV file")
    sample.add_argument("--instance", required=True, help="instance id")
    sample.add_argument("--t-prime", type=int, required=True, help="observed steps")
    sample.add_argument("--s", type=int, default=None, help="traces to draw (default: K)")
    sample.add_argument("--seed", type=int, required=True, help="random seed")
    sample.add_argument("--out", required=True, help="output ensemble CSV")
    sample.add_argument(
        "--no-cache",
        action="store_true",
        help="recondition per trace instead of reusing shared factorizations",
    )
    sample.set_defaults(func=_cmd_sample)

    evaluate = sub.add_parser(
        "evaluate",
        help="score a test set across update times",
        description=(
            "Evaluate likelihood, sample, quantile, and point metrics for the "
            "updated and non-updated variants in one paired pass, writing a trace "
            "table and a waterfall grid table."
        ),
    )
    evaluate.add_argument("--model", required=True, help="model JSON file")
    evaluate.add_argument("--profiles", required=True, help="profiles CSV file")
    evaluate.add_argument(
        "--t-prime",
        default=None,
        help="update times: an integer or half-open range start:stop (default: all)",
    )
    evaluate.add_argument("--s", type=int, default=None, help="traces per ensemble (default: K)")
    evaluate.add_argument("--seed", type=int, required=True, help="random seed")
    evaluate.add_argument(
        "--levels",
        default=None,
        help="quantile levels, comma-separated (default: 0.05..0.95 in steps of 0.05)",
    )
    evaluate.add_argument(
        "--mask-exclude-last",
        type=int,
        default=0,
        help="exclude the last N steps from metric time-averages",
    )
    evaluate.add_argument(
        "--dataset-tag",
        choices=DATASET_TAGS,
        default="real",
        help="dataset tag recorded in the trace table",
    )
    evaluate.add_argument("--out-traces", required=True, help="output trace CSV")
    evaluate.add_argument("--out-grid", required=True, help="output grid CSV")
    evaluate.add_argument("--threads", type=int, default=1, help="instance-level threads")
    evaluate.add_argument(
        "--no-cache",
        action="store_true",
        help="recondition per trace instead of reusing shared factorizations",
    )
    evaluate.set_defaults(func=_cmd_evaluate)

    tune = sub.add_parser(
        "tune-k",
        help="select the component count on a synthetic generator",
        description=(
            "Score each candidate K by the gap between best-case and synthetic "
            "negative-log-likelihood traces and write a tuning report."
        ),
    )
    tune.add_argument("--config", required=True, help="generator config JSON")
    tune.add_argument(
        "--k-grid",
        default=_DEFAULT_K_GRID,
        help=f"candidate component counts (default {_DEFAULT_K_GRID})",
    )
    tune.add_argument("--n", type=int, default=512, help="instances per candidate (default 512)")
    tune.add_argument("--seed", type=int, required=True, help="random seed")
    tune.add_argument("--out", required=True, help="output report JSON")
    tune.add_argument("--threads", type=int, default=1, help="instance-level threads")
    tune.set_defaults(func=_cmd_tune_k)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        _diag(f"error: {exc}")
        return 1
    except NumericalError as exc:
        _diag(f"numerical failure: {exc}")
        return 2
    except OSError as exc:
        _diag(f"io failure: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
