"""Single-photon bounds, secure key rate and attack monitoring.

Four protocol variants are supported:

``weak_plus_vacuum_corrected``
    The standard weak+vacuum decoy bound on the single-photon gain,
    ``mu^2 e^-mu / (mu nu - nu^2) * (Q_nu^L e^nu - Q_mu e^mu nu^2/mu^2
    - Y0^U (mu^2 - nu^2)/mu^2)``. This is the default.
``weak_plus_vacuum_as_printed``
    The same bracket with ``Q_nu`` in the second term and the prefactor
    ``(mu^2 - nu^2)/(mu^2 - mu nu)``. Kept for comparison only: it is not a
    valid lower bound over the whole parameter space.
``single_decoy``
    No vacuum decoy. Q1 uses the corrected expression with the dark-count
    level taken as known, and the error bound has no vacuum subtraction.
``asymptotic_infinite_decoy``
    Infinite-decoy limit: Y1 and e1 are inferred exactly from the signal
    gain and QBER assuming the standard loss/dark-count channel.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

from .model import (
    BoundedRates,
    DegenerateClassError,
    ObservedRates,
    ParameterError,
    SessionTally,
    SourceConfig,
    ValidationError,
    binary_entropy,
    ec_efficiency,
)

SIFTING_FACTOR = 0.5
DARK_COUNT_ERROR = 0.5

# Coefficient on the vacuum term of the single-photon error bound.
VACUUM_TERMS = {"half": 0.5, "full": 1.0}


class ProtocolVariant(str, enum.Enum):
    WEAK_PLUS_VACUUM_AS_PRINTED = "weak_plus_vacuum_as_printed"
    WEAK_PLUS_VACUUM_CORRECTED = "weak_plus_vacuum_corrected"
    SINGLE_DECOY = "single_decoy"
    ASYMPTOTIC_INFINITE_DECOY = "asymptotic_infinite_decoy"

    @classmethod
    def parse(cls, value: "str | ProtocolVariant") -> "ProtocolVariant":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise ValidationError("variant", f"unknown variant {value!r}; choose one of {names}") from None

    @property
    def is_weak_plus_vacuum(self) -> bool:
        return self in (
            ProtocolVariant.WEAK_PLUS_VACUUM_AS_PRINTED,
            ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED,
        )


class Verdict(str, enum.Enum):
    CLEAN = "clean"
    RATIO_ALARM = "ratio_alarm"
    VACUUM_ALARM = "vacuum_alarm"
    INSECURE_ZERO_RATE = "insecure_zero_rate"


@dataclass(frozen=True)
class Thresholds:
    ratio: float = 0.13
    y0_weak_vacuum: float = 1e-3
    y0_single_decoy: float = 4.8e-4

    def __post_init__(self):
        for name in ("ratio", "y0_weak_vacuum", "y0_single_decoy"):
            if not getattr(self, name) >= 0:
                raise ValidationError(name, "threshold must be >= 0")

    def y0_for(self, variant: ProtocolVariant) -> float:
        if variant is ProtocolVariant.SINGLE_DECOY:
            return self.y0_single_decoy
        return self.y0_weak_vacuum


@dataclass(frozen=True)
class SecurityResult:
    q1_lower: float
    e1_upper: float
    key_rate_bps: float
    raw_key_rate_bps: float
    secure_key_bits: int
    monitor_verdict: Verdict
    variant: ProtocolVariant
    vacuum_term: str = "half"
    e1_degenerate: bool = False
    q: float = SIFTING_FACTOR
    flags: tuple[str, ...] = field(default=())


def _check_intensities(mu: float, nu: float) -> None:
    if not mu > 0:
        raise ParameterError(f"mu must be > 0, got {mu!r}")
    if not nu > 0:
        raise ParameterError(f"nu must be > 0 for a decoy bound, got {nu!r}")
    if not nu < mu:
        raise ParameterError(f"decoy bound needs nu < mu, got mu={mu!r}, nu={nu!r}")


def _asymptotic_yields(mu: float, rates: ObservedRates) -> tuple[float, float]:
    """(Y1, e1) inferred from Q_mu, E_mu and Y0 under the loss/dark-count model."""
    y0 = rates.y0
    if y0 >= 1.0:
        return 1.0, DARK_COUNT_ERROR
    click = max(0.0, (rates.q_mu - y0) / (1.0 - y0))
    if click >= 1.0:
        eta = 1.0
    else:
        eta = min(1.0, -math.log1p(-click) / mu)
    y1 = y0 + (1.0 - y0) * eta
    if y1 <= 0.0:
        return 0.0, 1.0
    signal_part = rates.q_mu - y0
    if signal_part > 0:
        e_det = (rates.e_mu * rates.q_mu - DARK_COUNT_ERROR * y0) / signal_part
        e_det = min(1.0, max(0.0, e_det))
    else:
        e_det = 0.0
    e1 = (DARK_COUNT_ERROR * y0 + e_det * (y1 - y0)) / y1
    return y1, min(1.0, max(0.0, e1))


def compute_q1_lower(
    mu: float,
    nu: float,
    rates: ObservedRates,
    bounds: BoundedRates,
    variant: ProtocolVariant = ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED,
) -> float:
    """Lower bound on the per-pulse single-photon gain; negatives clamp to 0."""
    variant = ProtocolVariant.parse(variant)
    if variant is ProtocolVariant.ASYMPTOTIC_INFINITE_DECOY:
        if not mu > 0:
            raise ParameterError(f"mu must be > 0, got {mu!r}")
        y1, _ = _asymptotic_yields(mu, rates)
        return y1 * mu * math.exp(-mu)

    _check_intensities(mu, nu)
    vacuum_part = bounds.y0_upper * (mu**2 - nu**2) / mu**2
    if variant is ProtocolVariant.WEAK_PLUS_VACUUM_AS_PRINTED:
        prefactor = (mu**2 - nu**2) / (mu**2 - mu * nu)
        bracket = (
            bounds.q_nu_lower * math.exp(nu)
            - rates.q_nu * math.exp(mu) * nu**2 / mu**2
            - vacuum_part
        )
    else:
        prefactor = mu**2 * math.exp(-mu) / (mu * nu - nu**2)
        bracket = (
            bounds.q_nu_lower * math.exp(nu)
            - rates.q_mu * math.exp(mu) * nu**2 / mu**2
            - vacuum_part
        )
    return max(0.0, prefactor * bracket)


def compute_e1_upper(
    mu: float,
    rates: ObservedRates,
    bounds: BoundedRates,
    q1_lower: float,
    variant: ProtocolVariant = ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED,
    vacuum_term: str = "half",
) -> tuple[float, bool]:
    """Upper bound on the single-photon error rate.

    Returns ``(e1_upper, degenerate)``; ``degenerate`` is set when
    ``q1_lower`` is 0 and the bound falls back to 1.
    """
    variant = ProtocolVariant.parse(variant)
    if q1_lower < 0:
        raise ParameterError(f"q1_lower must be >= 0, got {q1_lower!r}")
    if q1_lower == 0.0:
        return 1.0, True
    if variant is ProtocolVariant.ASYMPTOTIC_INFINITE_DECOY:
        return _asymptotic_yields(mu, rates)[1], False
    if vacuum_term not in VACUUM_TERMS:
        raise ValidationError("vacuum_term", f"must be one of {tuple(VACUUM_TERMS)}, got {vacuum_term!r}")

    numerator = rates.e_mu * rates.q_mu
    if variant is not ProtocolVariant.SINGLE_DECOY:
        numerator -= VACUUM_TERMS[vacuum_term] * bounds.y0_lower * math.exp(-mu)
    return min(1.0, max(0.0, numerator / q1_lower)), False


def monitor_attacks(
    rates: ObservedRates,
    thresholds: Thresholds = Thresholds(),
    variant: ProtocolVariant = ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED,
) -> Verdict:
    """Ratio and vacuum-rate alarms. Advisory; the key rate is authoritative."""
    if rates.q_mu <= 0:
        raise DegenerateClassError("signal gain is zero; the Q_nu/Q_mu ratio is undefined")
    if rates.q_nu / rates.q_mu < thresholds.ratio:
        return Verdict.RATIO_ALARM
    if rates.y0 > thresholds.y0_for(ProtocolVariant.parse(variant)):
        return Verdict.VACUUM_ALARM
    return Verdict.CLEAN


def key_rate_terms(
    n_signal: float,
    duration_s: float,
    rates: ObservedRates,
    q1_lower: float,
    e1_upper: float,
    ec: Callable[[float], float] = ec_efficiency,
) -> float:
    """Unclamped key rate in bits/s."""
    correction = rates.q_mu * ec(rates.e_mu) * binary_entropy(rates.e_mu)
    # An error bound at or above 1/2 leaves nothing to amplify.
    amplified = q1_lower * (1.0 - binary_entropy(min(e1_upper, 0.5)))
    return SIFTING_FACTOR * n_signal * (amplified - correction) / duration_s


def compute_key_rate(
    tally: SessionTally,
    rates: ObservedRates,
    bounds: BoundedRates,
    source: SourceConfig,
    variant: ProtocolVariant = ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED,
    *,
    vacuum_term: str = "half",
    thresholds: Thresholds = Thresholds(),
    ec: Callable[[float], float] = ec_efficiency,
) -> SecurityResult:
    variant = ProtocolVariant.parse(variant)
    t = tally.session_duration_s
    q1 = compute_q1_lower(source.mu, source.nu, rates, bounds, variant)
    e1, degenerate = compute_e1_upper(source.mu, rates, bounds, q1, variant, vacuum_term)
    raw = key_rate_terms(tally.signal.pulses_sent, t, rates, q1, e1, ec)
    rate = max(0.0, raw)

    flags = [f"zero_detection:{name}" for name in rates.zero_detection]
    if degenerate:
        flags.append("e1_degenerate")
    try:
        verdict = monitor_attacks(rates, thresholds, variant)
    except DegenerateClassError:
        verdict = Verdict.INSECURE_ZERO_RATE
        flags.append("monitor_undefined")
    if verdict is Verdict.CLEAN and rate == 0.0:
        verdict = Verdict.INSECURE_ZERO_RATE

    return SecurityResult(
        q1_lower=q1,
        e1_upper=e1,
        key_rate_bps=rate,
        raw_key_rate_bps=raw,
        secure_key_bits=math.floor(rate * t),
        monitor_verdict=verdict,
        variant=variant,
        vacuum_term=vacuum_term,
        e1_degenerate=degenerate,
        flags=tuple(flags),
    )
