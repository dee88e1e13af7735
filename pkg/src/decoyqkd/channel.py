"""Honest and adversarial channel models and Monte Carlo session sampling.

The channel is described per photon number n by the probability ``click[n]``
that a pulse carrying n photons produces a signal-induced click at Bob, plus
a dark-count probability ``dark`` (Y0). Yields combine the two,
``Y_n = Y0 + (1 - Y0) click[n]``, and errors follow
``e_n Y_n = e0 Y0 + e_det (1 - Y0) click[n]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.stats import poisson

from .model import (
    PULSE_CLASSES,
    ChannelConfig,
    ClassTally,
    ObservedRates,
    QKDError,
    SessionTally,
    SourceConfig,
    ValidationError,
)

N_MAX = 40
ATTACK_KINDS = ("none", "pns", "vacuum_manipulation", "sync_spike")


class InfeasibleScenarioError(QKDError, ValueError):
    """The requested attack cannot be realised with yields in [0, 1]."""


@dataclass(frozen=True)
class AttackScenario:
    """Eavesdropping or artifact applied to a session.

    pns
        Eve blocks ``block_fraction`` of single-photon pulses and forwards
        multi-photon pulses (minus the photon she keeps) over a lossless
        link. With ``preserve_gain`` she also tunes Bob's effective
        efficiency on those pulses so the honest signal gain is unchanged.
    vacuum_manipulation
        The dark-count yield is replaced by ``y0_override``.
    sync_spike
        With probability ``spike_prob`` per session the vacuum-class counts
        are multiplied by ``spike_magnitude`` (a bookkeeping artifact, not a
        channel change).
    """

    kind: str = "none"
    block_fraction: float = 1.0
    preserve_gain: bool = True
    y0_override: float = 1.34e-4
    spike_prob: float = 0.01
    spike_magnitude: float = 5.0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValidationError("kind", f"must be one of {ATTACK_KINDS}, got {self.kind!r}")
        for name in ("block_fraction", "y0_override", "spike_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(name, f"must lie in [0, 1], got {v!r}")
        if not self.spike_magnitude >= 1.0:
            raise ValidationError("spike_magnitude", f"must be >= 1, got {self.spike_magnitude!r}")

    @property
    def tag(self) -> str:
        if self.kind == "pns":
            return f"pns(block_fraction={self.block_fraction:g},preserve_gain={self.preserve_gain})"
        if self.kind == "vacuum_manipulation":
            return f"vacuum_manipulation(y0_override={self.y0_override:g})"
        if self.kind == "sync_spike":
            return f"sync_spike(spike_prob={self.spike_prob:g},spike_magnitude={self.spike_magnitude:g})"
        return "none"


HONEST = AttackScenario()


@dataclass(frozen=True)
class YieldModel:
    click: np.ndarray
    dark: float
    misalignment_error: float
    vacuum_error: float = 0.5
    receiver_efficiency: float = 1.0

    @property
    def yields(self) -> np.ndarray:
        return self.dark + (1.0 - self.dark) * self.click

    @property
    def error_rates(self) -> np.ndarray:
        y = self.yields
        wrong = self.vacuum_error * self.dark + self.misalignment_error * (1.0 - self.dark) * self.click
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(y > 0, wrong / np.where(y > 0, y, 1.0), 0.0)

    def gain(self, intensity: float) -> float:
        return float(np.dot(photon_distribution(intensity), self.yields))

    def qber(self, intensity: float) -> float:
        g = self.gain(intensity)
        if g <= 0:
            return 0.0
        return float(np.dot(photon_distribution(intensity), self.yields * self.error_rates)) / g


def photon_distribution(intensity: float, n_max: int = N_MAX) -> np.ndarray:
    return poisson.pmf(np.arange(n_max + 1), intensity)


def honest_yields(channel: ChannelConfig, n_max: int = N_MAX) -> YieldModel:
    n = np.arange(n_max + 1)
    click = -np.expm1(n * np.log1p(-channel.transmission)) if channel.transmission < 1 else (n > 0) * 1.0
    return YieldModel(
        click=np.asarray(click, dtype=float),
        dark=channel.dark_count_prob,
        misalignment_error=channel.misalignment_error,
        vacuum_error=channel.vacuum_error,
        receiver_efficiency=channel.receiver_efficiency,
    )


def expected_rates(source: SourceConfig, channel: ChannelConfig) -> ObservedRates:
    """Closed-form honest gains and QBERs: Q = Y0 + (1 - Y0)(1 - exp(-eta*I))."""
    eta = channel.transmission
    y0 = channel.dark_count_prob

    def gain_and_qber(intensity: float) -> tuple[float, float]:
        signal = (1.0 - y0) * -math.expm1(-eta * intensity)
        q = y0 + signal
        if q <= 0:
            return 0.0, 0.0
        return q, (channel.vacuum_error * y0 + channel.misalignment_error * signal) / q

    q_mu, e_mu = gain_and_qber(source.mu)
    q_nu, e_nu = gain_and_qber(source.nu)
    return ObservedRates(q_mu=q_mu, q_nu=q_nu, y0=y0, e_mu=e_mu, e_nu=e_nu)


def _pns_click(n_max: int, forward_efficiency: float) -> np.ndarray:
    # Eve keeps one photon and forwards n-1 losslessly to a detector of the given efficiency.
    n = np.arange(n_max + 1)
    forwarded = np.maximum(n - 1, 0)
    if forward_efficiency >= 1.0:
        return (forwarded > 0) * 1.0
    return -np.expm1(forwarded * np.log1p(-forward_efficiency))


def apply_attack(
    yields: YieldModel, scenario: AttackScenario, mu: float | None = None
) -> YieldModel:
    """Per-photon-number yields after the attack.

    ``mu`` is the signal intensity, required for gain-preserving PNS.
    ``sync_spike`` leaves the yields unchanged; it acts on sampled tallies.
    """
    if scenario.kind in ("none", "sync_spike"):
        return yields
    if scenario.kind == "vacuum_manipulation":
        return replace(yields, dark=scenario.y0_override)

    honest_click = yields.click
    n_max = len(honest_click) - 1

    def attacked(forward_efficiency: float) -> YieldModel:
        click = _pns_click(n_max, forward_efficiency)
        click[1] = (1.0 - scenario.block_fraction) * honest_click[1]
        return replace(yields, click=click)

    if not scenario.preserve_gain:
        return attacked(yields.receiver_efficiency)
    if mu is None:
        raise ValueError("gain-preserving PNS needs the signal intensity mu")

    target = yields.gain(mu)
    if attacked(0.0).gain(mu) >= target:
        return attacked(0.0)
    if attacked(1.0).gain(mu) < target:
        raise InfeasibleScenarioError(
            "even lossless, unit-efficiency forwarding of multi-photon pulses "
            "cannot restore the honest signal gain"
        )
    t = brentq(lambda f: attacked(f).gain(mu) - target, 0.0, 1.0, xtol=1e-15, rtol=1e-14)
    return attacked(t)


def attacked_rates(
    source: SourceConfig, channel: ChannelConfig, scenario: AttackScenario = HONEST
) -> ObservedRates:
    """Expected rates under an attack, via Poisson sums over the yields."""
    model = apply_attack(honest_yields(channel), scenario, source.mu)
    return ObservedRates(
        q_mu=model.gain(source.mu),
        q_nu=model.gain(source.nu),
        y0=model.gain(0.0),
        e_mu=model.qber(source.mu),
        e_nu=model.qber(source.nu),
    )


@dataclass(frozen=True)
class SimulatedSession:
    tally: SessionTally
    true_q1: float
    true_e1: float
    scenario: AttackScenario
    seed: int
    spiked: bool = False
    # Tally before a sync spike inflated the vacuum counts; equals ``tally`` otherwise.
    unspiked_tally: SessionTally | None = field(default=None)

    @property
    def clean_tally(self) -> SessionTally:
        return self.unspiked_tally if self.unspiked_tally is not None else self.tally


def simulate_session(
    source: SourceConfig,
    channel: ChannelConfig,
    scenario: AttackScenario = HONEST,
    *,
    duration_s: float | None = None,
    n_pulses: int | None = None,
    seed: int = 0,
) -> SimulatedSession:
    """Sample one session with aggregate binomial draws.

    Class sizes are multinomial over the pulse train; detections and errors are
    binomial given the class gain and QBER, which is distributionally the same
    as simulating independent pulses one by one.
    """
    if n_pulses is None:
        if duration_s is None or not duration_s > 0:
            raise ValidationError("duration_s", "give a positive duration or a pulse count")
        n_pulses = int(round(source.clock_rate_hz * duration_s))
    elif duration_s is None:
        duration_s = n_pulses / source.clock_rate_hz
    if n_pulses < 1:
        raise ValidationError("n_pulses", f"session needs at least one pulse, got {n_pulses}")

    model = apply_attack(honest_yields(channel), scenario, source.mu)
    rng = np.random.default_rng(seed)
    sizes = rng.multinomial(n_pulses, source.probabilities)

    classes = {}
    for name, size in zip(PULSE_CLASSES, sizes):
        intensity = source.intensity(name)
        det = int(rng.binomial(size, min(1.0, model.gain(intensity))))
        err = int(rng.binomial(det, min(1.0, model.qber(intensity))))
        classes[name] = ClassTally(int(size), det, err)
    tally = SessionTally(session_duration_s=float(duration_s), **classes)

    spiked = False
    unspiked = None
    if scenario.kind == "sync_spike" and rng.random() < scenario.spike_prob:
        spiked = True
        unspiked = tally
        vac = tally.vacuum
        det = min(vac.pulses_sent, int(round(vac.detections * scenario.spike_magnitude)))
        err = min(det, int(round(vac.errors * scenario.spike_magnitude)))
        tally = replace(tally, vacuum=ClassTally(vac.pulses_sent, det, err))

    y1 = float(model.yields[1])
    return SimulatedSession(
        tally=tally,
        true_q1=y1 * source.mu * math.exp(-source.mu),
        true_e1=float(model.error_rates[1]),
        scenario=scenario,
        seed=int(seed),
        spiked=spiked,
        unspiked_tally=unspiked,
    )


def session_seeds(master_seed: int, n_sessions: int) -> list[int]:
    """Independent per-session seeds; entry i depends only on (master_seed, i)."""
    root = np.random.SeedSequence(master_seed)
    return [int(child.generate_state(1, np.uint64)[0]) for child in root.spawn(n_sessions)]


def run_campaign(
    source: SourceConfig,
    channel: ChannelConfig,
    scenario: AttackScenario = HONEST,
    n_sessions: int = 1,
    seed: int = 0,
    *,
    duration_s: float = 71.0,
) -> list[SimulatedSession]:
    if n_sessions < 1:
        raise ValidationError("sessions", f"must be >= 1, got {n_sessions}")
    return [
        simulate_session(source, channel, scenario, duration_s=duration_s, seed=s)
        for s in session_seeds(seed, n_sessions)
    ]


def expected_tally(
    source: SourceConfig, channel: ChannelConfig, duration_s: float, scenario: AttackScenario = HONEST
) -> tuple[SessionTally, ObservedRates]:
    """Noise-free session: expected counts (rounded) with exact rates alongside."""
    rates = expected_rates(source, channel) if scenario.kind in ("none", "sync_spike") else attacked_rates(
        source, channel, scenario
    )
    n = source.clock_rate_hz * duration_s
    per_class = {
        "signal": (source.p_signal, rates.q_mu, rates.e_mu),
        "decoy": (source.p_decoy, rates.q_nu, rates.e_nu),
        "vacuum": (source.p_vacuum, rates.y0, channel.vacuum_error),
    }
    classes = {}
    for name, (p, q, e) in per_class.items():
        sent = int(round(n * p))
        det = min(sent, int(round(sent * q)))
        classes[name] = ClassTally(sent, det, min(det, int(round(det * e))))
    return SessionTally(session_duration_s=duration_s, **classes), rates
