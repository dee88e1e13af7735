"""Command-line front end: simulate, sweep, optimize, analyze."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .analysis import AnalysisSettings, SWEEP_VARIABLES, sweep
from .bounds import BoundPolicy, ESTIMATORS, tail_probability
from .channel import run_campaign
from .config import ConfigError, RunConfig, config_from_dict, dump_config, load_config
from .model import QKDError, ValidationError
from .optimize import EmptyFeasibleSetError, OptimizationResult, optimize
from .records import SchemaError, build_record, read_sessions, reanalyze, summarize, write_curve, write_sessions
from .security import ProtocolVariant

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_RUNTIME = 4

log = logging.getLogger("decoyqkd")

MODELING_ASSUMPTIONS = [
    "channel.misalignment_error is a modeling assumption (chosen for a ~2% signal QBER), not a measured value",
    "channel.attenuation_db_per_km defaults to 0.20 (back-solved from the reference signal gain)",
    "dark counts are assumed to be wrong with probability vacuum_error = 0.5",
    "timestamps are synthetic offsets: index x session_duration_s",
]


def _metadata(command: str, config: RunConfig, settings: AnalysisSettings) -> dict[str, Any]:
    return {
        "command": command,
        "package_version": __version__,
        "variant": settings.variant.value,
        "vacuum_term": settings.vacuum_term,
        "bound_policy": dataclasses.asdict(settings.policy),
        "bound_tail_probability": tail_probability(settings.policy),
        "thresholds": dataclasses.asdict(settings.thresholds),
        "config": config.to_dict(),
        "modeling_assumptions": MODELING_ASSUMPTIONS,
    }


def _load(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    changes: dict[str, Any] = {}
    campaign = config.campaign
    if getattr(args, "seed", None) is not None:
        campaign = dataclasses.replace(campaign, seed=args.seed)
    if getattr(args, "sessions", None) is not None:
        campaign = dataclasses.replace(campaign, sessions=args.sessions)
    changes["campaign"] = campaign
    if getattr(args, "variant", None):
        ProtocolVariant.parse(args.variant)
        changes["analysis"] = dataclasses.replace(config.analysis, variant=args.variant)
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    return dataclasses.replace(config, **changes)


def _emit(args: argparse.Namespace, payload: Any) -> None:
    if not args.quiet:
        print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load(args)
    settings = config.settings
    c = config.campaign
    log.info("simulating %d sessions of %.3g s (%s)", c.sessions, c.session_duration_s, config.attack.tag)
    sessions = run_campaign(
        config.source, config.channel, config.attack, c.sessions, c.seed, duration_s=c.session_duration_s
    )
    records = [build_record(i, s, config.source, settings, c.session_duration_s) for i, s in enumerate(sessions)]
    out = Path(config.output_dir)
    meta = _metadata("simulate", config, settings)
    write_sessions(out / "sessions.csv", records, meta)
    summary = summarize(records)
    summary.update(variant=settings.variant.value, vacuum_term=settings.vacuum_term)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(args, summary)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    meta, records = read_sessions(args.dataset)
    stored = meta["config"]
    config = config_from_dict(stored)
    analysis = config.analysis
    if args.variant:
        analysis = dataclasses.replace(analysis, variant=ProtocolVariant.parse(args.variant).value)
    if args.vacuum_term:
        analysis = dataclasses.replace(analysis, vacuum_term=args.vacuum_term)
    policy = BoundPolicy(
        args.n_std_devs if args.n_std_devs is not None else config.bounds.n_std_devs,
        args.estimator or config.bounds.estimator,
    )
    config = dataclasses.replace(config, analysis=analysis, bounds=policy)
    settings = config.settings
    redone = [reanalyze(r, config.source, settings, unspiked=args.unspiked) for r in records]

    out = Path(args.out or config.output_dir)
    new_meta = _metadata("analyze", config, settings)
    new_meta["source_dataset"] = str(args.dataset)
    new_meta["unspiked"] = bool(args.unspiked)
    write_sessions(out / "sessions.csv", redone, new_meta)
    summary = summarize(redone)
    summary.update(variant=settings.variant.value, vacuum_term=settings.vacuum_term)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit(args, summary)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load(args)
    sc = config.sweep
    variable = args.variable or sc.variable
    if variable not in SWEEP_VARIABLES:
        raise ValidationError("variable", f"must be one of {SWEEP_VARIABLES}, got {variable!r}")
    start = sc.start if args.start is None else args.start
    stop = sc.stop if args.stop is None else args.stop
    points = sc.points if args.points is None else args.points
    if points < 1 or stop < start:
        raise ValidationError("range", f"empty sweep range [{start}, {stop}] with {points} points")
    xs = np.linspace(start, stop, points)
    variants = [ProtocolVariant.parse(v) for v in args.variants] if args.variants else None
    if variants is None and variable in ("y0", "ratio_qnu_qmu"):
        variants = [
            ProtocolVariant.WEAK_PLUS_VACUUM_CORRECTED,
            ProtocolVariant.WEAK_PLUS_VACUUM_AS_PRINTED,
            ProtocolVariant.SINGLE_DECOY,
        ]
    curve = sweep(
        variable, xs, config.source, config.channel, config.campaign.session_duration_s, config.settings, variants
    )
    out = Path(config.output_dir)
    path = out / f"curve_{variable}.csv"
    meta = _metadata("sweep", config, config.settings)
    write_curve(path, curve, meta)
    _emit(args, {"curve": str(path), "zero_rate_crossing": {n: curve.crossing(n) for n in curve.key_rate}})
    return EXIT_OK


def _report_section(result: OptimizationResult, variant: ProtocolVariant, finite: bool) -> dict[str, Any]:
    b = result.best
    return {
        "variant": variant.value,
        "finite_statistics": finite,
        "mu": b.mu,
        "nu": b.nu,
        "p_signal": b.p_signal,
        "p_decoy": b.p_decoy,
        "p_vacuum": b.p_vacuum,
        "key_rate_bps": result.key_rate_bps,
        "best_per_level": result.best_per_level,
        "evaluations": len(result.trace),
    }


def _write_trace(path: Path, result: OptimizationResult) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "mu", "nu", "p_signal", "p_decoy", "p_vacuum", "key_rate_bps"])
        for t in result.trace:
            p = t.params
            w.writerow([t.level] + [repr(float(v)) for v in (p.mu, p.nu, p.p_signal, p.p_decoy, p.p_vacuum, t.key_rate_bps)])


def cmd_optimize(args: argparse.Namespace) -> int:
    config = _load(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [("primary", config.optimization_spec())]
    if args.single_decoy:
        runs.append(("single_decoy", config.optimization_spec(variant=ProtocolVariant.SINGLE_DECOY)))
    if args.asymptotic:
        runs.append(
            (
                "asymptotic",
                config.optimization_spec(variant=ProtocolVariant.ASYMPTOTIC_INFINITE_DECOY, finite_statistics=False),
            )
        )
    report: dict[str, Any] = {"metadata": _metadata("optimize", config, config.settings), "sections": {}}
    for name, spec in runs:
        log.info("optimizing %s (%s)", name, spec.variant.value)
        result = optimize(spec)
        report["sections"][name] = _report_section(result, spec.variant, spec.finite_statistics)
        _write_trace(out / f"optimize_trace_{name}.csv", result)
    (out / "optimize.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _emit(args, report["sections"])
    return EXIT_OK


def cmd_default_config(args: argparse.Namespace) -> int:
    text = dump_config(RunConfig())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decoyqkd", description="Weak+vacuum decoy-state BB84 analysis toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp: argparse.ArgumentParser, seeded: bool = True) -> None:
        sp.add_argument("--config", type=str, default=None, help="YAML run configuration")
        sp.add_argument("--out", type=str, default=None, help="output directory")
        sp.add_argument("--variant", type=str, default=None, choices=[v.value for v in ProtocolVariant])
        sp.add_argument("--quiet", action="store_true", help="suppress the JSON summary on stdout")
        if seeded:
            sp.add_argument("--seed", type=int, default=None)
            sp.add_argument("--sessions", type=int, default=None)

    s = sub.add_parser("simulate", help="run a Monte Carlo campaign and analyze every session")
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="key rate versus Q_nu/Q_mu, Y0 or distance")
    common(s, seeded=False)
    s.add_argument("--variable", choices=SWEEP_VARIABLES, default=None)
    s.add_argument("--start", type=float, default=None)
    s.add_argument("--stop", type=float, default=None)
    s.add_argument("--points", type=int, default=None)
    s.add_argument("--variants", nargs="+", default=None, choices=[v.value for v in ProtocolVariant])
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("optimize", help="grid-search mu, nu and class probabilities")
    common(s, seeded=False)
    s.add_argument("--single-decoy", action="store_true", help="add a single-decoy section")
    s.add_argument("--asymptotic", action="store_true", help="add an infinite-decoy, no-widening section")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("analyze", help="re-analyze a session dataset without re-simulating")
    s.add_argument("--dataset", required=True, help="sessions.csv written by simulate or analyze")
    s.add_argument("--out", type=str, default=None)
    s.add_argument("--variant", type=str, default=None, choices=[v.value for v in ProtocolVariant])
    s.add_argument("--n-std-devs", type=float, default=None)
    s.add_argument("--estimator", choices=ESTIMATORS, default=None)
    s.add_argument("--vacuum-term", choices=("half", "full"), default=None)
    s.add_argument("--unspiked", action="store_true", help="use vacuum counts from before sync spikes")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("default-config", help="print the default configuration")
    s.add_argument("--out", type=str, default=None)
    s.set_defaults(func=cmd_default_config)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ValidationError, EmptyFeasibleSetError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (SchemaError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except QKDError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
