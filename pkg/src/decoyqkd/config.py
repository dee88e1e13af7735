"""Run configuration: a nested YAML document with a strict schema."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .analysis import AnalysisSettings
from .bounds import BoundPolicy
from .channel import AttackScenario
from .model import ChannelConfig, QKDError, SourceConfig, ValidationError
from .optimize import OptimizationSpec
from .security import ProtocolVariant, Thresholds


class ConfigError(QKDError, ValueError):
    """Config file could not be parsed or failed validation."""


@dataclass(frozen=True)
class CampaignConfig:
    sessions: int = 3262
    session_duration_s: float = 71.0
    seed: int = 0

    def __post_init__(self):
        if self.sessions < 1:
            raise ValidationError("sessions", f"must be >= 1, got {self.sessions}")
        if not self.session_duration_s > 0:
            raise ValidationError("session_duration_s", "must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed", "must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class SweepConfig:
    variable: str = "y0"
    start: float = 1e-5
    stop: float = 2e-3
    points: int = 200

    def __post_init__(self):
        if self.points < 1:
            raise ValidationError("points", "sweep range is empty")


@dataclass(frozen=True)
class OptimizerConfig:
    mu_range: tuple[float, float] = (0.05, 0.95)
    nu_range: tuple[float, float] = (0.01, 0.40)
    p_decoy_range: tuple[float, float] = (0.01, 0.25)
    p_vacuum_range: tuple[float, float] = (0.002, 0.10)
    grid_points: int = 9
    refinement_levels: int = 4
    finite_statistics: bool = True


@dataclass(frozen=True)
class AnalysisConfig:
    variant: str = ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED.value
    vacuum_term: str = "half"
    ratio_threshold: float = 0.13
    y0_threshold_weak_vacuum: float = 1e-3
    y0_threshold_single_decoy: float = 4.8e-4

    def __post_init__(self):
        ProtocolVariant.parse(self.variant)
        if self.vacuum_term not in ("half", "full"):
            raise ValidationError("vacuum_term", f"must be 'half' or 'full', got {self.vacuum_term!r}")


@dataclass(frozen=True)
class RunConfig:
    source: SourceConfig = SourceConfig()
    channel: ChannelConfig = ChannelConfig()
    bounds: BoundPolicy = BoundPolicy()
    analysis: AnalysisConfig = AnalysisConfig()
    attack: AttackScenario = AttackScenario()
    campaign: CampaignConfig = CampaignConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    sweep: SweepConfig = SweepConfig()
    output_dir: str = "out"

    @property
    def settings(self) -> AnalysisSettings:
        a = self.analysis
        return AnalysisSettings(
            variant=ProtocolVariant.parse(a.variant),
            vacuum_term=a.vacuum_term,
            policy=self.bounds,
            thresholds=Thresholds(a.ratio_threshold, a.y0_threshold_weak_vacuum, a.y0_threshold_single_decoy),
        )

    def optimization_spec(self, variant: ProtocolVariant | str | None = None, finite_statistics: bool | None = None) -> OptimizationSpec:
        o = self.optimizer
        return OptimizationSpec(
            channel=self.channel,
            variant=ProtocolVariant.parse(variant or self.analysis.variant),
            mu_range=o.mu_range,
            nu_range=o.nu_range,
            p_decoy_range=o.p_decoy_range,
            p_vacuum_range=o.p_vacuum_range,
            grid_points=o.grid_points,
            refinement_levels=o.refinement_levels,
            duration_s=self.campaign.session_duration_s,
            clock_rate_hz=self.source.clock_rate_hz,
            policy=self.bounds,
            finite_statistics=o.finite_statistics if finite_statistics is None else finite_statistics,
            vacuum_term=self.analysis.vacuum_term,
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if dataclasses.is_dataclass(value):
                out[f.name] = {
                    k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(value).items()
                }
            else:
                out[f.name] = value
        return out


_SECTIONS = {
    "source": SourceConfig,
    "channel": ChannelConfig,
    "bounds": BoundPolicy,
    "analysis": AnalysisConfig,
    "attack": AttackScenario,
    "campaign": CampaignConfig,
    "optimizer": OptimizerConfig,
    "sweep": SweepConfig,
}


def _key_lines(node: yaml.Node | None, prefix: str = "") -> dict[str, int]:
    lines: dict[str, int] = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}{key.value}"
            lines[path] = key.start_mark.line + 1
            lines.update(_key_lines(value, path + "."))
    return lines


def _coerce(cls: type, name: str, value: Any, path: str) -> Any:
    default = getattr(cls(), name)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != 2:
            raise ValidationError(path, f"expected a [lo, hi] pair, got {value!r}")
        return tuple(_coerce_number(v, path) for v in value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValidationError(path, f"expected a string, got {value!r}")
        return value
    return value


def _coerce_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    return float(value)


def config_from_dict(data: dict[str, Any], lines: dict[str, int] | None = None) -> RunConfig:
    lines = lines or {}

    def where(path: str) -> str:
        return f"line {lines[path]}: " if path in lines else ""

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping of sections")

    kwargs: dict[str, Any] = {}
    for section, value in data.items():
        if section == "output_dir":
            if not isinstance(value, str):
                raise ConfigError(f"{where(section)}output_dir: expected a string")
            kwargs[section] = value
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"{where(section)}unknown section {section!r}")
        cls = _SECTIONS[section]
        if value is None:
            value = {}
        if not isinstance(value, dict):
            raise ConfigError(f"{where(section)}{section}: expected a mapping")
        allowed = {f.name for f in dataclasses.fields(cls)}
        fields = {}
        for key, v in value.items():
            path = f"{section}.{key}"
            if key not in allowed:
                raise ConfigError(f"{where(path)}unknown key {path!r}")
            try:
                fields[key] = _coerce(cls, key, v, path)
            except ValidationError as exc:
                raise ConfigError(f"{where(path)}{exc}") from None
        try:
            kwargs[section] = cls(**fields)
        except ValidationError as exc:
            path = f"{section}.{exc.field}"
            raise ConfigError(f"{where(path)}{section}.{exc}") from None
    return RunConfig(**kwargs)


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse YAML: {exc}") from None
    return config_from_dict(data, _key_lines(node))


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
