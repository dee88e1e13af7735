"""End-to-end evaluation: tally or analytic rates -> bounds -> key rate, and sweeps."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .bounds import BoundPolicy, widen_rates
from .channel import HONEST, AttackScenario, expected_tally
from .model import BoundedRates, ChannelConfig, ObservedRates, SessionTally, SourceConfig, ValidationError, tally_to_rates
from .security import ProtocolVariant, SecurityResult, Thresholds, compute_key_rate

ALL_VARIANTS = tuple(ProtocolVariant)
SWEEP_VARIABLES = ("ratio_qnu_qmu", "y0", "distance")


@dataclass(frozen=True)
class AnalysisSettings:
    variant: ProtocolVariant = ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED
    vacuum_term: str = "half"
    policy: BoundPolicy = BoundPolicy()
    thresholds: Thresholds = Thresholds()

    def with_variant(self, variant: ProtocolVariant | str) -> "AnalysisSettings":
        return replace(self, variant=ProtocolVariant.parse(variant))


def evaluate(
    tally: SessionTally,
    rates: ObservedRates,
    source: SourceConfig,
    settings: AnalysisSettings = AnalysisSettings(),
) -> tuple[BoundedRates, SecurityResult]:
    bounds = widen_rates(rates, tally, settings.policy)
    result = compute_key_rate(
        tally,
        rates,
        bounds,
        source,
        settings.variant,
        vacuum_term=settings.vacuum_term,
        thresholds=settings.thresholds,
    )
    return bounds, result


def analyze_tally(
    tally: SessionTally, source: SourceConfig, settings: AnalysisSettings = AnalysisSettings()
) -> tuple[ObservedRates, BoundedRates, SecurityResult]:
    rates = tally_to_rates(tally)
    bounds, result = evaluate(tally, rates, source, settings)
    return rates, bounds, result


def analytic_result(
    source: SourceConfig,
    channel: ChannelConfig,
    duration_s: float = 71.0,
    settings: AnalysisSettings = AnalysisSettings(),
    scenario: AttackScenario = HONEST,
    rates: ObservedRates | None = None,
) -> SecurityResult:
    """Deterministic key rate from expected rates and expected pulse counts.

    ``rates`` overrides the channel-derived rates (used by the ratio sweep).
    """
    tally, model_rates = expected_tally(source, channel, duration_s, scenario)
    return evaluate(tally, rates if rates is not None else model_rates, source, settings)[1]


@dataclass(frozen=True)
class Curve:
    variable: str
    x: np.ndarray
    key_rate: dict[str, np.ndarray]
    raw_key_rate: dict[str, np.ndarray]

    def crossing(self, column: str) -> float | None:
        """Where the raw key rate first reaches zero, moving toward insecurity.

        That is downward in x for the ratio sweep and upward otherwise;
        located by linear interpolation between grid points.
        """
        x, y = self.x, self.raw_key_rate[column]
        if self.variable == "ratio_qnu_qmu":
            x, y = x[::-1], y[::-1]
        return first_zero(x, y)


def first_zero(x: Sequence[float], y: Sequence[float]) -> float | None:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for i in range(len(y)):
        if y[i] <= 0:
            if i == 0:
                return float(x[0])
            x0, x1, y0, y1 = x[i - 1], x[i], y[i - 1], y[i]
            return float(x0 + (x1 - x0) * y0 / (y0 - y1))
    return None


def find_zero_crossing(f: Callable[[float], float], lo: float, hi: float, n_scan: int = 400) -> float | None:
    """First root of ``f`` on [lo, hi] scanning from ``lo``, refined by Brent's method."""
    xs = np.linspace(lo, hi, n_scan)
    prev_x, prev_y = xs[0], f(xs[0])
    if prev_y <= 0:
        return float(prev_x)
    for x in xs[1:]:
        y = f(x)
        if y <= 0:
            if y == 0:
                return float(x)
            return float(brentq(f, prev_x, x, xtol=1e-14, rtol=1e-12))
        prev_x, prev_y = x, y
    return None


def _validate_range(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValidationError(name, "sweep range is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(name, "sweep range contains non-finite values")
    return arr


def ratio_rate(
    ratio: float,
    source: SourceConfig,
    channel: ChannelConfig,
    duration_s: float,
    settings: AnalysisSettings,
) -> SecurityResult:
    """Key rate when Q_nu is degraded to ``ratio * Q_mu`` with everything else honest."""
    tally, honest = expected_tally(source, channel, duration_s)
    rates = replace(honest, q_nu=min(1.0, max(0.0, ratio * honest.q_mu)))
    return evaluate(tally, rates, source, settings)[1]


def y0_rate(
    y0: float,
    source: SourceConfig,
    channel: ChannelConfig,
    duration_s: float,
    settings: AnalysisSettings,
) -> SecurityResult:
    """Key rate with the channel's vacuum yield set to ``y0`` (all rates follow)."""
    return analytic_result(source, replace(channel, dark_count_prob=y0), duration_s, settings)


def distance_rate(
    km: float,
    source: SourceConfig,
    channel: ChannelConfig,
    duration_s: float,
    settings: AnalysisSettings,
) -> SecurityResult:
    return analytic_result(source, replace(channel, fiber_length_km=km), duration_s, settings)


_SWEEPS = {"ratio_qnu_qmu": ratio_rate, "y0": y0_rate, "distance": distance_rate}


def sweep(
    variable: str,
    values: Sequence[float],
    source: SourceConfig,
    channel: ChannelConfig,
    duration_s: float = 71.0,
    settings: AnalysisSettings = AnalysisSettings(),
    variants: Sequence[ProtocolVariant | str] | None = None,
) -> Curve:
    """Key rate per protocol variant along one swept quantity."""
    if variable not in _SWEEPS:
        raise ValidationError("variable", f"must be one of {SWEEP_VARIABLES}, got {variable!r}")
    xs = _validate_range(values, variable)
    if variants is None:
        variants = ALL_VARIANTS
    fn = _SWEEPS[variable]
    rate, raw = {}, {}
    for v in variants:
        s = settings.with_variant(v)
        results = [fn(float(x), source, channel, duration_s, s) for x in xs]
        rate[s.variant.value] = np.array([r.key_rate_bps for r in results])
        raw[s.variant.value] = np.array([r.raw_key_rate_bps for r in results])
    return Curve(variable, xs, rate, raw)


def zero_rate_threshold(
    variable: str,
    lo: float,
    hi: float,
    source: SourceConfig,
    channel: ChannelConfig,
    duration_s: float = 71.0,
    settings: AnalysisSettings = AnalysisSettings(),
) -> float | None:
    """Point at which the raw key rate first reaches zero.

    The ratio sweep is scanned downward from ``hi`` (rate vanishes at low
    ratios); y0 and distance are scanned upward from ``lo``.
    """
    fn = _SWEEPS[variable]

    def raw(x: float) -> float:
        return fn(x, source, channel, duration_s, settings).raw_key_rate_bps

    if variable == "ratio_qnu_qmu":
        root = find_zero_crossing(lambda u: raw(hi - u), 0.0, hi - lo)
        return None if root is None else hi - root
    return find_zero_crossing(raw, lo, hi)
