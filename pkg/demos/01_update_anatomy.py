#!/usr/bin/env python3
"""Anatomy of a single intraday update.

Builds a three-component day-ahead mixture by hand, draws the "true" day
from one of its components, and then replays the morning: after each
observed prefix the script shows how the component responsibilities shift,
how the conditioned mixture mean locks onto the truth, and how much
predictive log-density the update buys over the frozen day-ahead marginal.
"""

import numpy as np

from mixcast import (
    DenseCovariance,
    DiagonalCovariance,
    MixtureForecast,
    MvnComponent,
    cholesky_lower,
    materialize,
    mixture_mean,
    predictive_log_density,
    remaining_marginal,
    update,
)

HORIZON = 8
LABELS = ("morning-peak", "flat", "evening-ramp")


def build_forecast() -> MixtureForecast:
    """Three regimes a day could follow, with a mild prior toward 'flat'."""
    steps = np.arange(HORIZON)
    peak = 2.0 * np.exp(-0.5 * ((steps - 2.0) / 1.2) ** 2)
    flat = np.full(HORIZON, 0.8)
    ramp = 0.15 * steps

    # Correlated noise for the ramp regime: neighbouring steps move together.
    lag = np.abs(steps[:, None] - steps[None, :])
    smooth = 0.35**2 * 0.7**lag + 0.05 * np.eye(HORIZON)

    components = (
        MvnComponent(mean=peak, cov=DiagonalCovariance(np.full(HORIZON, 0.35))),
        MvnComponent(mean=flat, cov=DiagonalCovariance(np.full(HORIZON, 0.30))),
        MvnComponent(mean=ramp, cov=DenseCovariance(smooth)),
    )
    return MixtureForecast(
        horizon=HORIZON,
        components=components,
        weights=np.array([0.3, 0.45, 0.25]),
        instance_id="demo-day",
    )


def bar(weight: float, width: int = 32) -> str:
    return "#" * int(round(weight * width))


def main() -> None:
    fc = build_forecast()
    rng = np.random.default_rng(7)

    # The day actually follows the *least* favoured regime: the evening ramp.
    true_component = 2
    comp = fc.components[true_component]
    factor = cholesky_lower(materialize(comp.cov))
    day = comp.mean + factor @ rng.standard_normal(HORIZON)

    print("Day-ahead mixture (horizon = %d steps)" % HORIZON)
    for k, (label, w) in enumerate(zip(LABELS, fc.weights)):
        print(f"  component {k} {label:<13} prior weight {w:.2f}  {bar(w)}")
    print()
    print("Truth drawn from component 2 (evening-ramp):")
    print("  " + "  ".join(f"{v:6.2f}" for v in day))
    print()

    header = f"{'t_prime':>7}  {'responsibilities (gamma)':<34}  {'updated':>9}  {'frozen':>9}  {'gain':>7}"
    print(header)
    print("-" * len(header))

    for t_prime in range(HORIZON):
        upd = update(fc, day[:t_prime])
        gamma = upd.gamma.gamma
        remainder = day[t_prime:]

        lp_updated = predictive_log_density(upd, remainder)
        frozen = remaining_marginal(fc, t_prime)
        lp_frozen = predictive_log_density(update(frozen, np.empty(0)), remainder)

        gammas = " ".join(f"{g:.3f}" for g in gamma)
        print(
            f"{t_prime:>7}  [{gammas}] {bar(gamma[true_component], 10):<10}"
            f"  {lp_updated:>9.3f}  {lp_frozen:>9.3f}  {lp_updated - lp_frozen:>+7.3f}"
        )

    print()
    t_prime = 4
    upd = update(fc, day[:t_prime])
    mean = mixture_mean(upd)
    print(f"After {t_prime} observed steps, expected remainder vs truth:")
    print("  step     " + "  ".join(f"{f't{t + 1}':>5}" for t in range(t_prime, HORIZON)))
    print("  expected " + "  ".join(f"{v:5.2f}" for v in mean))
    print("  truth    " + "  ".join(f"{v:5.2f}" for v in day[t_prime:]))
    print()
    print(
        "The bar tracks the responsibility of the generating component: the\n"
        "prior starts at 0.25, and a few observed steps are enough for the\n"
        "evidence to override the prior.  'gain' is the extra predictive\n"
        "log-density of the updated mixture over the frozen day-ahead\n"
        "marginal for the same remaining steps — it is 0 at t_prime = 0 by\n"
        "construction and grows as observations accumulate."
    )


if __name__ == "__main__":
    main()
