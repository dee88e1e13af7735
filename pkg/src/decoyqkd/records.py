"""Session-record datasets: comma-separated rows plus a JSON metadata sidecar."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .analysis import AnalysisSettings, Curve, analyze_tally
from .channel import SimulatedSession
from .model import BoundedRates, ClassTally, ObservedRates, QKDError, SessionTally, SourceConfig
from .security import ProtocolVariant, SecurityResult, Verdict

SCHEMA_VERSION = "decoyqkd.sessions/1"
CURVE_SCHEMA_VERSION = "decoyqkd.curve/1"
META_SUFFIX = ".meta.json"

COLUMNS = (
    "index",
    "timestamp_s",
    "seed",
    "scenario",
    "spiked",
    "duration_s",
    "signal_sent",
    "signal_detections",
    "signal_errors",
    "decoy_sent",
    "decoy_detections",
    "decoy_errors",
    "vacuum_sent",
    "vacuum_detections",
    "vacuum_errors",
    "unspiked_vacuum_detections",
    "unspiked_vacuum_errors",
    "q_mu",
    "q_nu",
    "y0",
    "e_mu",
    "e_nu",
    "q_nu_lower",
    "y0_upper",
    "y0_lower",
    "q1_lower",
    "e1_upper",
    "raw_key_rate_bps",
    "key_rate_bps",
    "secure_key_bits",
    "verdict",
    "flags",
    "true_q1",
    "true_e1",
)


class SchemaError(QKDError, ValueError):
    """A dataset file is missing, truncated or from another schema version."""


@dataclass(frozen=True)
class SessionRecord:
    index: int
    timestamp_s: float
    seed: int
    scenario: str
    spiked: bool
    tally: SessionTally
    unspiked_tally: SessionTally
    rates: ObservedRates
    bounds: BoundedRates
    result: SecurityResult
    true_q1: float
    true_e1: float


def build_record(
    index: int,
    session: SimulatedSession,
    source: SourceConfig,
    settings: AnalysisSettings,
    mean_duration_s: float,
) -> SessionRecord:
    rates, bounds, result = analyze_tally(session.tally, source, settings)
    return SessionRecord(
        index=index,
        timestamp_s=index * mean_duration_s,
        seed=session.seed,
        scenario=session.scenario.tag,
        spiked=session.spiked,
        tally=session.tally,
        unspiked_tally=session.clean_tally,
        rates=rates,
        bounds=bounds,
        result=result,
        true_q1=session.true_q1,
        true_e1=session.true_e1,
    )


def reanalyze(record: SessionRecord, source: SourceConfig, settings: AnalysisSettings, unspiked: bool = False) -> SessionRecord:
    """Recompute rates, bounds and result from the stored tally.

    With ``unspiked`` the pre-artifact vacuum counts are used instead.
    """
    tally = record.unspiked_tally if unspiked else record.tally
    rates, bounds, result = analyze_tally(tally, source, settings)
    return SessionRecord(
        index=record.index,
        timestamp_s=record.timestamp_s,
        seed=record.seed,
        scenario=record.scenario,
        spiked=record.spiked and not unspiked,
        tally=tally,
        unspiked_tally=record.unspiked_tally,
        rates=rates,
        bounds=bounds,
        result=result,
        true_q1=record.true_q1,
        true_e1=record.true_e1,
    )


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _row(r: SessionRecord) -> list[str]:
    t, u, res = r.tally, r.unspiked_tally, r.result
    values = [
        r.index, r.timestamp_s, r.seed, r.scenario, r.spiked, t.session_duration_s,
        t.signal.pulses_sent, t.signal.detections, t.signal.errors,
        t.decoy.pulses_sent, t.decoy.detections, t.decoy.errors,
        t.vacuum.pulses_sent, t.vacuum.detections, t.vacuum.errors,
        u.vacuum.detections, u.vacuum.errors,
        r.rates.q_mu, r.rates.q_nu, r.rates.y0, r.rates.e_mu, r.rates.e_nu,
        r.bounds.q_nu_lower, r.bounds.y0_upper, r.bounds.y0_lower,
        res.q1_lower, res.e1_upper, res.raw_key_rate_bps, res.key_rate_bps, res.secure_key_bits,
        res.monitor_verdict.value, ";".join(res.flags), r.true_q1, r.true_e1,
    ]
    return [_fmt(v) for v in values]


def meta_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + META_SUFFIX)


def write_sessions(path: str | Path, records: Sequence[SessionRecord], metadata: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow(_row(r))
    meta = dict(metadata)
    meta.update(schema_version=SCHEMA_VERSION, columns=list(COLUMNS), n_records=len(records))
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_metadata(path: str | Path) -> dict[str, Any]:
    mpath = meta_path(path)
    try:
        meta = json.loads(mpath.read_text())
    except FileNotFoundError:
        raise SchemaError(f"{mpath}: metadata sidecar not found") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{mpath}: invalid JSON ({exc})") from None
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"{mpath}: schema version {meta.get('schema_version')!r} does not match {SCHEMA_VERSION!r}"
        )
    return meta


def _parse_row(row: dict[str, str], lineno: int, variant: ProtocolVariant, vacuum_term: str) -> SessionRecord:
    try:
        i = lambda k: int(row[k])  # noqa: E731
        f = lambda k: float(row[k])  # noqa: E731
        duration = f("duration_s")

        def tally(vac_det: str, vac_err: str) -> SessionTally:
            return SessionTally(
                signal=ClassTally(i("signal_sent"), i("signal_detections"), i("signal_errors")),
                decoy=ClassTally(i("decoy_sent"), i("decoy_detections"), i("decoy_errors")),
                vacuum=ClassTally(i("vacuum_sent"), i(vac_det), i(vac_err)),
                session_duration_s=duration,
            )

        flags = tuple(x for x in row["flags"].split(";") if x)
        result = SecurityResult(
            q1_lower=f("q1_lower"),
            e1_upper=f("e1_upper"),
            key_rate_bps=f("key_rate_bps"),
            raw_key_rate_bps=f("raw_key_rate_bps"),
            secure_key_bits=i("secure_key_bits"),
            monitor_verdict=Verdict(row["verdict"]),
            variant=variant,
            vacuum_term=vacuum_term,
            e1_degenerate="e1_degenerate" in flags,
            flags=flags,
        )
        return SessionRecord(
            index=i("index"),
            timestamp_s=f("timestamp_s"),
            seed=i("seed"),
            scenario=row["scenario"],
            spiked=row["spiked"] == "1",
            tally=tally("vacuum_detections", "vacuum_errors"),
            unspiked_tally=tally("unspiked_vacuum_detections", "unspiked_vacuum_errors"),
            rates=ObservedRates(f("q_mu"), f("q_nu"), f("y0"), f("e_mu"), f("e_nu")),
            bounds=BoundedRates(f("q_nu_lower"), f("y0_upper"), f("y0_lower")),
            result=result,
            true_q1=f("true_q1"),
            true_e1=f("true_e1"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"line {lineno}: malformed session record ({exc})") from None


def read_sessions(path: str | Path) -> tuple[dict[str, Any], list[SessionRecord]]:
    """Load a dataset and its sidecar, checking schema version and completeness."""
    meta = read_metadata(path)
    try:
        variant = ProtocolVariant.parse(meta["variant"])
        vacuum_term = meta["vacuum_term"]
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{meta_path(path)}: missing or invalid analysis labels ({exc})") from None
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise SchemaError(f"{path}: dataset not found") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != COLUMNS:
            raise SchemaError(f"{path}: header does not match schema {SCHEMA_VERSION}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(COLUMNS):
                raise SchemaError(f"{path}: line {lineno} has {len(row)} fields, expected {len(COLUMNS)}")
            records.append(_parse_row(dict(zip(COLUMNS, row)), lineno, variant, vacuum_term))
    if len(records) != meta.get("n_records"):
        raise SchemaError(
            f"{path}: {len(records)} records but metadata declares {meta.get('n_records')} (truncated file?)"
        )
    return meta, records


def _two_sigma(values: np.ndarray) -> float:
    return float(2.0 * np.std(values, ddof=1)) if len(values) > 1 else 0.0


def summarize(records: Sequence[SessionRecord]) -> dict[str, Any]:
    """Campaign summary.

    ``two_sigma`` entries are the session-to-session spread, a descriptive
    statistic unrelated to the k-sigma security widening.
    """
    rate = np.array([r.result.key_rate_bps for r in records])
    verdicts: dict[str, int] = {}
    for r in records:
        verdicts[r.result.monitor_verdict.value] = verdicts.get(r.result.monitor_verdict.value, 0) + 1
    out: dict[str, Any] = {
        "n_sessions": len(records),
        "key_rate_bps": {
            "mean": float(rate.mean()),
            "median": float(np.median(rate)),
            "p05": float(np.percentile(rate, 5)),
            "p95": float(np.percentile(rate, 95)),
            "two_sigma": _two_sigma(rate),
        },
        "secure_key_bits_total": int(sum(r.result.secure_key_bits for r in records)),
        "verdicts": dict(sorted(verdicts.items())),
        "spiked_sessions": int(sum(r.spiked for r in records)),
    }
    for name in ("q_mu", "q_nu", "y0", "e_mu", "e_nu"):
        v = np.array([getattr(r.rates, name) for r in records])
        out[name] = {"mean": float(v.mean()), "two_sigma": _two_sigma(v)}
    return out


def write_curve(path: str | Path, curve: Curve, metadata: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(curve.key_rate)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x"] + [f"key_rate_bps:{n}" for n in names] + [f"raw_key_rate_bps:{n}" for n in names])
        for j, x in enumerate(curve.x):
            writer.writerow(
                [repr(float(x))]
                + [repr(float(curve.key_rate[n][j])) for n in names]
                + [repr(float(curve.raw_key_rate[n][j])) for n in names]
            )
    meta = dict(metadata)
    crossings = {n: curve.crossing(n) for n in names}
    meta.update(
        schema_version=CURVE_SCHEMA_VERSION,
        variable=curve.variable,
        variants=names,
        zero_rate_crossing={n: (None if c is None or math.isnan(c) else c) for n, c in crossings.items()},
    )
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
