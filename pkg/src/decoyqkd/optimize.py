"""Deterministic coarse-to-fine grid search over source parameters."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .analysis import AnalysisSettings, analytic_result
from .bounds import BoundPolicy
from .model import ChannelConfig, ParameterError, QKDError, SourceConfig, ValidationError
from .security import ProtocolVariant


class EmptyFeasibleSetError(QKDError, ValueError):
    """No grid point satisfies nu < mu and p_decoy + p_vacuum < 1."""


@dataclass(frozen=True)
class SourceParams:
    mu: float
    nu: float
    p_decoy: float
    p_vacuum: float

    @property
    def p_signal(self) -> float:
        return 1.0 - self.p_decoy - self.p_vacuum

    def to_source(self, clock_rate_hz: float) -> SourceConfig:
        return SourceConfig(
            mu=self.mu,
            nu=self.nu,
            p_signal=self.p_signal,
            p_decoy=self.p_decoy,
            p_vacuum=self.p_vacuum,
            clock_rate_hz=clock_rate_hz,
        )


def _check_range(name: str, r: tuple[float, float]) -> None:
    lo, hi = r
    if not (0.0 < lo <= hi < 1.0):
        raise ValidationError(name, f"range must satisfy 0 < lo <= hi < 1, got {r!r}")


@dataclass(frozen=True)
class OptimizationSpec:
    channel: ChannelConfig = ChannelConfig()
    variant: ProtocolVariant = ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED
    mu_range: tuple[float, float] = (0.05, 0.95)
    nu_range: tuple[float, float] = (0.01, 0.40)
    p_decoy_range: tuple[float, float] = (0.01, 0.25)
    p_vacuum_range: tuple[float, float] = (0.002, 0.10)
    grid_points: int = 9
    refinement_levels: int = 4
    duration_s: float = 71.0
    clock_rate_hz: float = 7.143e6
    policy: BoundPolicy = BoundPolicy()
    finite_statistics: bool = True
    vacuum_term: str = "half"

    def __post_init__(self):
        object.__setattr__(self, "variant", ProtocolVariant.parse(self.variant))
        for name in ("mu_range", "nu_range", "p_decoy_range", "p_vacuum_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
            _check_range(name, getattr(self, name))
        if self.grid_points < 2:
            raise ValidationError("grid_points", "need at least 2 points per axis")
        if self.refinement_levels < 0:
            raise ValidationError("refinement_levels", "must be >= 0")
        if not self.duration_s > 0:
            raise ValidationError("duration_s", "must be > 0")

    @property
    def settings(self) -> AnalysisSettings:
        policy = self.policy if self.finite_statistics else BoundPolicy(0.0, self.policy.estimator)
        return AnalysisSettings(variant=self.variant, vacuum_term=self.vacuum_term, policy=policy)

    @property
    def ranges(self) -> tuple[tuple[float, float], ...]:
        return (self.mu_range, self.nu_range, self.p_decoy_range, self.p_vacuum_range)


def objective(params: SourceParams, spec: OptimizationSpec) -> float:
    """Analytic secure key rate (bit/s) at ``params``; no sampling."""
    if not params.nu < params.mu:
        raise ParameterError(f"need nu < mu, got mu={params.mu!r}, nu={params.nu!r}")
    source = params.to_source(spec.clock_rate_hz)
    return analytic_result(source, spec.channel, spec.duration_s, spec.settings).key_rate_bps


@dataclass(frozen=True)
class TracePoint:
    level: int
    params: SourceParams
    key_rate_bps: float


@dataclass
class OptimizationResult:
    best: SourceParams
    key_rate_bps: float
    trace: list[TracePoint] = field(default_factory=list)
    best_per_level: list[float] = field(default_factory=list)

    def final_grid(self) -> list[TracePoint]:
        last = self.trace[-1].level
        return [p for p in self.trace if p.level == last]


def _rank_key(point: TracePoint):
    p = point.params
    return (-point.key_rate_bps, p.mu, p.nu, -p.p_signal)


def _feasible(p: SourceParams) -> bool:
    return p.nu < p.mu and p.p_decoy + p.p_vacuum < 1.0


def _axes_around(best: float, step: float, bounds: tuple[float, float], n: int) -> tuple[np.ndarray, float]:
    lo = max(bounds[0], best - 2.0 * step)
    hi = min(bounds[1], best + 2.0 * step)
    axis = np.union1d(np.linspace(lo, hi, n), [best])
    return axis, (hi - lo) / (n - 1)


def optimize(spec: OptimizationSpec) -> OptimizationResult:
    """Nested grid search maximizing the analytic key rate.

    Each refinement level re-grids a +/- 2 step box around the incumbent
    (which is always re-included, so the best value never decreases). Ties
    go to smaller mu, then smaller nu, then larger p_signal.
    """
    n = spec.grid_points
    axes = [np.linspace(lo, hi, n) for lo, hi in spec.ranges]
    steps = [(hi - lo) / (n - 1) for lo, hi in spec.ranges]
    trace: list[TracePoint] = []
    best_per_level: list[float] = []
    incumbent: TracePoint | None = None

    for level in range(spec.refinement_levels + 1):
        points = []
        for mu, nu, pd, pv in itertools.product(*axes):
            params = SourceParams(float(mu), float(nu), float(pd), float(pv))
            if _feasible(params):
                points.append(TracePoint(level, params, objective(params, spec)))
        if not points:
            raise EmptyFeasibleSetError("no grid point satisfies nu < mu and p_decoy + p_vacuum < 1")
        trace.extend(points)
        incumbent = min(points, key=_rank_key)
        best_per_level.append(incumbent.key_rate_bps)

        b = incumbent.params
        new_axes, new_steps = [], []
        for value, step, bounds in zip((b.mu, b.nu, b.p_decoy, b.p_vacuum), steps, spec.ranges):
            axis, s = _axes_around(value, step, bounds, n)
            new_axes.append(axis)
            new_steps.append(s)
        axes, steps = new_axes, new_steps

    assert incumbent is not None
    return OptimizationResult(incumbent.params, incumbent.key_rate_bps, trace, best_per_level)
