#!/usr/bin/env python3
"""Choosing the mixture size K with a twin-evaluation gap.

How many components should a day-ahead mixture carry?  Too few and it
cannot represent the spread of plausible days; more than the process
supports buys nothing.  For each candidate K this script scores the same
K-component forecasts twice — once on truths drawn from the forecasts'
own components (the best case the updater could hope for) and once on
truths drawn from the actual generating process — and compares the two
likelihood traces.  When K is rich enough, being scored on reality is no
worse than being scored on your own samples, so the gap between the
traces collapses; the smallest K at the minimal gap wins.
"""

from mixcast import (
    GeneratorConfig,
    derive_seed,
    make_ground_truth,
    sample_conditions,
    select_k,
)

SEED = 4
N_DAYS = 64
K_GRID = [1, 2, 4, 8, 16]


def bar(value: float, scale: float, width: int = 40) -> str:
    return "#" * max(1, int(round(value / scale * width)))


def main() -> None:
    cfg = GeneratorConfig(horizon=10, pool_size=16, seed=SEED)
    gt = make_ground_truth(cfg)
    conditions = sample_conditions(gt, N_DAYS, derive_seed(SEED, "conditions"))

    print(f"Scoring K in {K_GRID} on {N_DAYS} days, horizon {cfg.horizon} ...")
    report = select_k(K_GRID, gt, conditions, SEED, threads=2)
    print()

    worst = max(report.gap.values())
    print("  K     gap (mean |best-case NLL - synthetic NLL|)")
    print("  " + "-" * 56)
    for k in report.k_grid:
        marker = "  <-- selected" if k == report.k_star else ""
        print(f"  {k:>2}  {report.gap[k]:>8.4f}  {bar(report.gap[k], worst)}{marker}")
    print()

    print(f"Likelihood traces behind the gap (K = {report.k_grid[0]} vs K = {report.k_star}):")
    print()
    for k in (report.k_grid[0], report.k_star):
        pair = report.traces[k]
        t_primes = sorted(pair["best_case"].values)
        print(f"  K = {k}")
        print("    t'         " + "".join(f"{t:>7}" for t in t_primes))
        for tag in ("best_case", "synthetic"):
            values = pair[tag].values
            print(f"    {tag:<10} " + "".join(f"{values[t]:>7.2f}" for t in t_primes))
        print()

    print(
        "With a single component the mixture cannot hedge between regimes:\n"
        "its own samples are easy to score (low best-case NLL) while real\n"
        "draws from the process are not, so the traces sit far apart.  As K\n"
        "grows the forecast covers more of what the process can actually\n"
        "do, and once it carries every regime the two traces differ only by\n"
        "sampling noise.  Were several candidates to reach the same minimal\n"
        "gap, the tie would break toward the smallest."
    )


if __name__ == "__main__":
    main()
