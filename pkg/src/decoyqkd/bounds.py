"""k-sigma widening of measured decoy and vacuum rates."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    BoundedRates,
    DegenerateClassError,
    ObservedRates,
    SessionTally,
    ValidationError,
)

ESTIMATORS = ("binomial", "poisson")


@dataclass(frozen=True)
class BoundPolicy:
    n_std_devs: float = 10.0
    estimator: str = "binomial"

    def __post_init__(self):
        # k = 0 is allowed as an explicit "central values" override.
        if not self.n_std_devs >= 0 or math.isinf(self.n_std_devs):
            raise ValidationError("n_std_devs", f"must be a finite number >= 0, got {self.n_std_devs!r}")
        if self.estimator not in ESTIMATORS:
            raise ValidationError("estimator", f"must be one of {ESTIMATORS}, got {self.estimator!r}")


def rate_std(p: float, n: float, estimator: str = "binomial") -> float:
    """Standard error of a per-pulse rate ``p`` measured over ``n`` pulses."""
    if n <= 0:
        raise DegenerateClassError("standard error needs a positive pulse count")
    if estimator == "poisson":
        return math.sqrt(p / n)
    return math.sqrt(p * (1.0 - p) / n)


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def widen(
    rates: ObservedRates,
    n_signal: float,
    n_decoy: float,
    n_vacuum: float,
    policy: BoundPolicy = BoundPolicy(),
) -> BoundedRates:
    """Widen rates given (possibly non-integer, expected) pulse counts per class."""
    if n_decoy <= 0:
        raise DegenerateClassError("decoy class has no pulses; Q_nu cannot be bounded")
    if n_vacuum <= 0:
        raise DegenerateClassError("vacuum class has no pulses; Y0 cannot be bounded")
    k = policy.n_std_devs
    est = policy.estimator
    sd_nu = rate_std(rates.q_nu, n_decoy, est)
    sd_y0 = rate_std(rates.y0, n_vacuum, est)
    q_mu_lower = q_mu_upper = None
    if n_signal > 0:
        sd_mu = rate_std(rates.q_mu, n_signal, est)
        q_mu_lower = _clamp(rates.q_mu - k * sd_mu)
        q_mu_upper = _clamp(rates.q_mu + k * sd_mu)
    return BoundedRates(
        q_nu_lower=_clamp(rates.q_nu - k * sd_nu),
        y0_upper=_clamp(rates.y0 + k * sd_y0),
        y0_lower=_clamp(rates.y0 - k * sd_y0),
        q_mu_lower=q_mu_lower,
        q_mu_upper=q_mu_upper,
    )


def widen_rates(
    rates: ObservedRates, tally: SessionTally, policy: BoundPolicy = BoundPolicy()
) -> BoundedRates:
    """Bounds from a session's own pulse counts.

    ``q_mu_lower``/``q_mu_upper`` are diagnostics only; the security bounds use
    the central signal gain.
    """
    return widen(
        rates,
        tally.signal.pulses_sent,
        tally.decoy.pulses_sent,
        tally.vacuum.pulses_sent,
        policy,
    )


def confidence_of(policy: BoundPolicy) -> float:
    """Two-sided Gaussian confidence of a +/- k sigma interval."""
    return math.erf(policy.n_std_devs / math.sqrt(2.0))


def tail_probability(policy: BoundPolicy) -> float:
    """``1 - confidence_of(policy)`` computed without cancellation."""
    return math.erfc(policy.n_std_devs / math.sqrt(2.0))
