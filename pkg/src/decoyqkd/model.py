"""Domain types and shared math for weak+vacuum decoy-state BB84 analysis.

All value objects are frozen dataclasses validated on construction, so any
instance that exists satisfies its invariants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

PROB_SUM_TOL = 1e-12
PULSE_CLASSES = ("signal", "decoy", "vacuum")


class QKDError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(QKDError, ValueError):
    """A configuration or value object violates its invariants."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class DegenerateClassError(QKDError, ValueError):
    """A pulse class needed for a rate has no pulses (or no detections)."""


class ParameterError(QKDError, ValueError):
    """Formula parameters make a bound undefined (e.g. a vanishing denominator)."""


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValidationError(name, f"must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class SourceConfig:
    """Alice's source: intensities, class probabilities and clock rate."""

    mu: float = 0.55
    nu: float = 0.098
    # The reported probabilities (0.93, 0.062, 0.016) sum to 1.008; stored normalized.
    p_signal: float = 0.93 / 1.008
    p_decoy: float = 0.062 / 1.008
    p_vacuum: float = 0.016 / 1.008
    clock_rate_hz: float = 7.143e6

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError("mu", f"must be > 0, got {self.mu!r}")
        if not self.nu > 0:
            raise ValidationError("nu", f"must be > 0, got {self.nu!r}")
        if not self.nu < self.mu:
            raise ValidationError("nu", f"must be < mu ({self.mu!r}), got {self.nu!r}")
        for name in ("p_signal", "p_decoy", "p_vacuum"):
            _check_prob(name, getattr(self, name))
        total = self.p_signal + self.p_decoy + self.p_vacuum
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(
                "p_signal", f"p_signal + p_decoy + p_vacuum must equal 1, got {total!r}"
            )
        if not self.clock_rate_hz > 0:
            raise ValidationError("clock_rate_hz", f"must be > 0, got {self.clock_rate_hz!r}")

    @property
    def probabilities(self) -> tuple[float, float, float]:
        return (self.p_signal, self.p_decoy, self.p_vacuum)

    def intensity(self, pulse_class: str) -> float:
        return {"signal": self.mu, "decoy": self.nu, "vacuum": 0.0}[pulse_class]


@dataclass(frozen=True)
class ChannelConfig:
    """Fiber link plus Bob's receiver.

    ``receiver_efficiency`` already folds in Bob's internal loss, and
    ``dark_count_prob`` is the per-gate probability of a click with no photon
    (the vacuum yield). ``misalignment_error`` is a modeling assumption chosen
    to give a signal QBER of about 2% on the reference link.
    """

    fiber_length_km: float = 20.0
    attenuation_db_per_km: float = 0.20
    receiver_efficiency: float = 5.62e-2
    dark_count_prob: float = 1.34e-4
    misalignment_error: float = 0.0147
    vacuum_error: float = 0.5

    def __post_init__(self):
        if not self.fiber_length_km >= 0:
            raise ValidationError("fiber_length_km", f"must be >= 0, got {self.fiber_length_km!r}")
        if not self.attenuation_db_per_km >= 0:
            raise ValidationError(
                "attenuation_db_per_km", f"must be >= 0, got {self.attenuation_db_per_km!r}"
            )
        for name in ("receiver_efficiency", "dark_count_prob", "misalignment_error", "vacuum_error"):
            _check_prob(name, getattr(self, name))

    @property
    def fiber_transmission(self) -> float:
        return 10.0 ** (-self.attenuation_db_per_km * self.fiber_length_km / 10.0)

    @property
    def transmission(self) -> float:
        """Overall single-photon detection probability (fiber x receiver)."""
        return self.receiver_efficiency * self.fiber_transmission


@dataclass(frozen=True)
class ClassTally:
    pulses_sent: int
    detections: int
    errors: int

    def __post_init__(self):
        for name in ("pulses_sent", "detections", "errors"):
            v = getattr(self, name)
            if int(v) != v:
                raise ValidationError(name, f"must be an integer count, got {v!r}")
        if not 0 <= self.errors <= self.detections <= self.pulses_sent:
            raise ValidationError(
                "detections",
                "need 0 <= errors <= detections <= pulses_sent, got "
                f"{self.errors}/{self.detections}/{self.pulses_sent}",
            )


@dataclass(frozen=True)
class SessionTally:
    """Raw counts from one key session."""

    signal: ClassTally
    decoy: ClassTally
    vacuum: ClassTally
    session_duration_s: float

    def __post_init__(self):
        if not self.session_duration_s > 0:
            raise ValidationError(
                "session_duration_s", f"must be > 0, got {self.session_duration_s!r}"
            )

    def by_class(self, pulse_class: str) -> ClassTally:
        return getattr(self, pulse_class)

    @property
    def total_pulses(self) -> int:
        return self.signal.pulses_sent + self.decoy.pulses_sent + self.vacuum.pulses_sent

    @property
    def total_detections(self) -> int:
        return self.signal.detections + self.decoy.detections + self.vacuum.detections


@dataclass(frozen=True)
class ObservedRates:
    """Per-pulse gains and QBERs of one session.

    ``zero_detection`` names the classes whose QBER was set to 0 because
    nothing was detected.
    """

    q_mu: float
    q_nu: float
    y0: float
    e_mu: float
    e_nu: float
    zero_detection: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for name in ("q_mu", "q_nu", "y0", "e_mu", "e_nu"):
            _check_prob(name, getattr(self, name))


@dataclass(frozen=True)
class BoundedRates:
    """Statistically widened rates consumed by the security bounds."""

    q_nu_lower: float
    y0_upper: float
    y0_lower: float
    q_mu_lower: float | None = None
    q_mu_upper: float | None = None

    def __post_init__(self):
        for name in ("q_nu_lower", "y0_upper", "y0_lower"):
            _check_prob(name, getattr(self, name))
        if self.y0_lower > self.y0_upper:
            raise ValidationError("y0_lower", "must not exceed y0_upper")

    @classmethod
    def exact(cls, rates: ObservedRates) -> "BoundedRates":
        """Zero-width bounds: every bound equals its central value."""
        return cls(
            q_nu_lower=rates.q_nu,
            y0_upper=rates.y0,
            y0_lower=rates.y0,
            q_mu_lower=rates.q_mu,
            q_mu_upper=rates.q_mu,
        )


def binary_entropy(x: float) -> float:
    """H2(x) in bits, with H2(0) = H2(1) = 0."""
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"binary entropy argument must lie in [0, 1], got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


EC_EFFICIENCY = 1.10


def ec_efficiency(e_mu: float) -> float:
    """Error-correction leakage factor above the Shannon limit (constant model)."""
    if not (0.0 <= e_mu <= 1.0):
        raise ValueError(f"QBER must lie in [0, 1], got {e_mu!r}")
    return EC_EFFICIENCY


def tally_to_rates(tally: SessionTally) -> ObservedRates:
    for name in PULSE_CLASSES:
        if tally.by_class(name).pulses_sent == 0:
            raise DegenerateClassError(f"no {name} pulses were sent; its rate is undefined")

    zero = tuple(name for name in PULSE_CLASSES if tally.by_class(name).detections == 0)

    def qber(c: ClassTally) -> float:
        return c.errors / c.detections if c.detections else 0.0

    return ObservedRates(
        q_mu=tally.signal.detections / tally.signal.pulses_sent,
        q_nu=tally.decoy.detections / tally.decoy.pulses_sent,
        y0=tally.vacuum.detections / tally.vacuum.pulses_sent,
        e_mu=qber(tally.signal),
        e_nu=qber(tally.decoy),
        zero_detection=zero,
    )
