"""CSV artefacts of a simulation run and per-horizon metric reports."""

from __future__ import annotations

import csv
import datetime as _dt
import os
from typing import IO, Iterable, Sequence

from .. import __version__
from ..metrics import CensusRow, MetricsReport, build_report, fmt_cell
from .engine import SimResult

SUMMARY_COLUMNS = (
    "config_hash",
    "seed",
    "policy",
    "created",
    "delivered",
    "relayed",
    "DR",
    "OR",
    "mean_DD",
)
CENSUS_COLUMNS = ("t", "msg_id", "S", "E", "I", "C", "R", "dead")
EVENT_COLUMNS = ("t", "kind", "node_a", "node_b", "msg_id")


def timestamp() -> str:
    """UTC ISO-8601 time; ``SOURCE_DATE_EPOCH`` pins it for reproducible files."""
    pinned = os.environ.get("SOURCE_DATE_EPOCH")
    if pinned is not None:
        moment = _dt.datetime.fromtimestamp(int(pinned), tz=_dt.timezone.utc)
    else:
        moment = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return moment.isoformat()


def header_lines(config_hash: str | None, seeds: Iterable[int] = (), **extra: object) -> list[str]:
    """Comment header shared by every output file. The timestamp comes last."""
    lines = [f"ciser-dtn {__version__}"]
    if config_hash is not None:
        lines.append(f"config_hash: {config_hash}")
    seeds = list(seeds)
    if seeds:
        lines.append("seeds: " + " ".join(str(s) for s in seeds))
    for key, value in extra.items():
        lines.append(f"{key}: {value}")
    lines.append(f"generated: {timestamp()}")
    return lines


def write_header(fh: IO[str], lines: Iterable[str]) -> None:
    for line in lines:
        fh.write(f"# {line}\n")


def report_at(result: SimResult, horizon: float | None = None) -> MetricsReport:
    """Metrics counting only creations, relays and deliveries up to ``horizon``."""
    if horizon is None:
        created, delivered, relayed = result.created, result.delivered, result.relayed
    else:
        created = sum(1 for m in result.messages if m.created_at <= horizon)
        delivered = sum(
            1 for m in result.messages if m.delivered_at is not None and m.delivered_at <= horizon
        )
        relayed = sum(1 for t in result.relay_times if t <= horizon)
    return build_report(
        policy=result.policy,
        seed=result.seed,
        config_hash=result.config_hash,
        created=created,
        delivered=delivered,
        relayed=relayed,
        deliveries=result.deliveries(horizon),
        horizon=horizon,
    )


def summary_row(report: MetricsReport) -> list[str]:
    return [
        report.config_hash,
        str(report.seed),
        report.policy,
        str(report.created),
        str(report.delivered),
        str(report.relayed),
        fmt_cell(report.delivery_ratio),
        fmt_cell(report.overhead_ratio),
        fmt_cell(report.mean_delivery_delay),
    ]


def write_summary(fh: IO[str], reports: Sequence[MetricsReport], header: Iterable[str]) -> None:
    write_header(fh, header)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for rep in reports:
        w.writerow(summary_row(rep))


def write_census(fh: IO[str], census: Iterable[CensusRow], header: Iterable[str]) -> None:
    write_header(fh, header)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CENSUS_COLUMNS)
    for row in census:
        w.writerow([fmt_cell(row.t), row.msg_id, row.s, row.e, row.i, row.c, row.r, row.dead])


def write_events(fh: IO[str], events: Iterable[tuple], header: Iterable[str]) -> None:
    write_header(fh, header)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for t, kind, a, b, msg in events:
        w.writerow([fmt_cell(t), kind, "" if a < 0 else a, "" if b < 0 else b, "" if msg < 0 else msg])


def _data_lines(fh: IO[str]) -> Iterable[str]:
    return (line for line in fh if line.strip() and not line.startswith("#"))


def read_summary(fh: IO[str]) -> list[MetricsReport]:
    """Parse ``summary.csv`` rows back into reports (empty cells become None)."""
    reader = csv.DictReader(_data_lines(fh))
    missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"summary is missing columns: {sorted(missing)}")
    out = []
    for row in reader:
        out.append(
            MetricsReport(
                policy=row["policy"],
                seed=int(row["seed"]),
                config_hash=row["config_hash"],
                created=int(row["created"]),
                delivered=int(row["delivered"]),
                relayed=int(row["relayed"]),
                delivery_ratio=float(row["DR"]) if row["DR"] else None,
                overhead_ratio=float(row["OR"]) if row["OR"] else None,
                mean_delivery_delay=float(row["mean_DD"]) if row["mean_DD"] else None,
            )
        )
    return out


def read_census(fh: IO[str]) -> list[CensusRow]:
    reader = csv.DictReader(_data_lines(fh))
    return [
        CensusRow(
            t=float(r["t"]),
            msg_id=int(r["msg_id"]),
            s=int(r["S"]),
            e=int(r["E"]),
            i=int(r["I"]),
            c=int(r["C"]),
            r=int(r["R"]),
            dead=int(r["dead"]),
        )
        for r in reader
    ]


def infected_fraction(result: SimResult, horizon: float | None = None) -> list[tuple[float, float]]:
    """Mean over tracked messages of the infected share of alive nodes, per sample.

    Carriers count as infected. Samples with no tracked message yet give 0.
    """
    per_t: dict[float, list[float]] = {t: [] for t in result.census_times}
    for row in result.census:
        if row.alive:
            per_t[row.t].append((row.i + row.c) / row.alive)
    return [
        (t, sum(v) / len(v) if v else 0.0)
        for t, v in sorted(per_t.items())
        if horizon is None or t <= horizon
    ]
