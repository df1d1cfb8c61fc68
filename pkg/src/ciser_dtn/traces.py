"""Pairwise contact traces: parsing, canonical export, replay and statistics.

Canonical on-disk form is CSV with header ``start_s,end_s,node_a,node_b``.
Whitespace-separated CRAWDAD-style files (``start end a b`` per line) are
accepted with ``fmt="whitespace"``. Lines starting with ``#`` are comments.

Times are seconds in the trace epoch; the dataset span starts at
``min(0, first start)`` so that simulator time and trace time coincide.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import IO, Iterable, Literal

import numpy as np

TraceFormat = Literal["csv", "whitespace"]
CANONICAL_HEADER = ("start_s", "end_s", "node_a", "node_b")


class TraceError(ValueError):
    pass


class ParseError(TraceError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyTrace(TraceError):
    pass


class OutOfSpan(TraceError):
    pass


@dataclass(frozen=True, order=True)
class ContactRecord:
    start: float
    end: float
    node_a: int
    node_b: int

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ValueError("end precedes start")
        if self.node_a == self.node_b:
            raise ValueError("self-contact")
        if self.node_a > self.node_b:
            a, b = self.node_b, self.node_a
            object.__setattr__(self, "node_a", a)
            object.__setattr__(self, "node_b", b)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.node_a, self.node_b)

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class TraceDataset:
    records: tuple[ContactRecord, ...]
    n_nodes: int
    span: tuple[float, float]
    source: str = ""
    node_ids: tuple[str, ...] = field(default=())  # original label of each dense index

    def __post_init__(self) -> None:
        if not self.records:
            raise EmptyTrace("trace has no contact records")

    @classmethod
    def from_records(
        cls, records: Iterable[ContactRecord], source: str = "", node_ids: tuple[str, ...] = ()
    ) -> TraceDataset:
        recs = tuple(sorted(records))
        if not recs:
            raise EmptyTrace("trace has no contact records")
        n = 1 + max(r.node_b for r in recs)
        if node_ids and len(node_ids) != n:
            raise TraceError("node id mapping does not match record indices")
        span = (min(0.0, recs[0].start), max(r.end for r in recs))
        return cls(
            records=recs,
            n_nodes=n,
            span=span,
            source=source,
            node_ids=node_ids or tuple(str(k) for k in range(n)),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TraceDataset):
            return NotImplemented
        return (self.records, self.n_nodes, self.span) == (
            other.records,
            other.n_nodes,
            other.span,
        )

    def __hash__(self) -> int:
        return hash((self.records, self.n_nodes, self.span))

    @property
    def n_pairs(self) -> int:
        return self.n_nodes * (self.n_nodes - 1) // 2

    @property
    def duration(self) -> float:
        return self.span[1] - self.span[0]


def _sort_ids(ids: set[str]) -> list[str]:
    try:
        return sorted(ids, key=lambda s: (float(s), s))
    except ValueError:
        return sorted(ids)


def parse_contact_trace(
    stream: IO[str] | Iterable[str], fmt: TraceFormat = "csv", source: str = ""
) -> TraceDataset:
    """Read a contact trace and remap node labels to dense indices 0..N-1.

    Labels are ordered numerically when they all parse as numbers, otherwise
    lexicographically, so a trace that already uses dense integer ids maps
    onto itself.
    """
    if fmt not in ("csv", "whitespace"):
        raise ValueError(f"unknown trace format {fmt!r}")
    raw: list[tuple[int, float, float, str, str]] = []
    header_seen = False
    for lineno, line in enumerate(stream, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = [f.strip() for f in text.split(",")] if fmt == "csv" else text.split()
        if fmt == "csv" and not header_seen:
            header_seen = True
            if tuple(fields) == CANONICAL_HEADER:
                continue
            # headerless CSV is tolerated; fall through and parse as data
        if len(fields) < 4:
            raise ParseError(lineno, f"expected 4 fields, got {len(fields)}")
        try:
            start, end = float(fields[0]), float(fields[1])
        except ValueError:
            raise ParseError(lineno, "start/end are not numbers") from None
        if not (math.isfinite(start) and math.isfinite(end)):
            raise ParseError(lineno, "non-finite time")
        if end < start:
            raise ParseError(lineno, f"end {end!r} precedes start {start!r}")
        a, b = fields[2], fields[3]
        if a == b:
            raise ParseError(lineno, f"node {a!r} in contact with itself")
        raw.append((lineno, start, end, a, b))
    if not raw:
        raise EmptyTrace("trace has no contact records")

    labels = _sort_ids({r[3] for r in raw} | {r[4] for r in raw})
    index = {lab: k for k, lab in enumerate(labels)}
    records = [ContactRecord(s, e, index[a], index[b]) for _, s, e, a, b in raw]
    return TraceDataset.from_records(records, source=source, node_ids=tuple(labels))


def _fmt(x: float) -> str:
    return repr(float(x))


def export_contact_trace(
    dataset: TraceDataset, fh: IO[str], header_lines: Iterable[str] = ()
) -> None:
    """Write the canonical CSV form using dense node indices."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    fh.write(",".join(CANONICAL_HEADER) + "\n")
    for r in dataset.records:
        fh.write(f"{_fmt(r.start)},{_fmt(r.end)},{r.node_a},{r.node_b}\n")


def active_links(dataset: TraceDataset, t: float) -> list[tuple[int, int]]:
    """Pairs with a record satisfying start <= t < end, sorted, without duplicates."""
    lo, hi = dataset.span
    if not lo <= t <= hi:
        raise OutOfSpan(f"t={t!r} outside span [{lo!r}, {hi!r}]")
    return sorted({r.pair for r in dataset.records if r.start <= t < r.end})


class TraceReplay:
    """Vectorised link lookup for driving the simulator from a dataset."""

    def __init__(self, dataset: TraceDataset):
        self.dataset = dataset
        self._start = np.array([r.start for r in dataset.records])
        self._end = np.array([r.end for r in dataset.records])
        self._a = np.array([r.node_a for r in dataset.records], dtype=np.int64)
        self._b = np.array([r.node_b for r in dataset.records], dtype=np.int64)

    def links(self, t: float) -> list[tuple[int, int]]:
        """Active pairs at ``t``; empty outside the span."""
        lo, hi = self.dataset.span
        if not lo <= t <= hi:
            return []
        # records are sorted by start, so only a prefix can be active
        upto = int(np.searchsorted(self._start, t, side="right"))
        ends = self._end[:upto]
        hit = np.nonzero(ends > t)[0]
        if hit.size == 0:
            return []
        pairs = set(zip(self._a[hit].tolist(), self._b[hit].tolist()))
        return sorted(pairs)

    def linked(self, a: int, b: int, t: float) -> bool:
        if a > b:
            a, b = b, a
        upto = int(np.searchsorted(self._start, t, side="right"))
        mask = (self._a[:upto] == a) & (self._b[:upto] == b) & (self._end[:upto] > t)
        return bool(mask.any())


@dataclass(frozen=True)
class TraceStats:
    n_nodes: int
    n_records: int
    n_pairs: int
    span_s: float
    aggregate_rate: float
    mean_inter_contact: dict[tuple[int, int], float]
    overall_mean_inter_contact: float | None
    duration_min: float
    duration_mean: float
    duration_median: float
    duration_max: float

    def rows(self) -> list[tuple[str, object]]:
        return [
            ("nodes", self.n_nodes),
            ("records", self.n_records),
            ("pairs", self.n_pairs),
            ("span_s", self.span_s),
            ("aggregate_rate_per_pair_s", self.aggregate_rate),
            ("mean_inter_contact_s", self.overall_mean_inter_contact),
            ("duration_min_s", self.duration_min),
            ("duration_mean_s", self.duration_mean),
            ("duration_median_s", self.duration_median),
            ("duration_max_s", self.duration_max),
        ]


def _merged_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def trace_stats(dataset: TraceDataset) -> TraceStats:
    """Inter-contact gaps per pair, aggregate contact rate and duration summary.

    Gaps run from the end of one contact to the start of the next after
    overlapping records of the same pair are merged. The aggregate rate is
    records / (possible pairs * span) and estimates the pairwise contact rate.
    """
    if not dataset.records:
        raise EmptyTrace("trace has no contact records")
    by_pair: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for r in dataset.records:
        by_pair.setdefault(r.pair, []).append((r.start, r.end))
    per_pair: dict[tuple[int, int], float] = {}
    all_gaps: list[float] = []
    for pair in sorted(by_pair):
        merged = _merged_intervals(by_pair[pair])
        gaps = [merged[k + 1][0] - merged[k][1] for k in range(len(merged) - 1)]
        if gaps:
            per_pair[pair] = math.fsum(gaps) / len(gaps)
            all_gaps.extend(gaps)
    durations = [r.duration for r in dataset.records]
    pairs = max(dataset.n_pairs, 1)
    span = dataset.duration
    rate = len(dataset.records) / (pairs * span) if span > 0 else math.inf
    return TraceStats(
        n_nodes=dataset.n_nodes,
        n_records=len(dataset.records),
        n_pairs=dataset.n_pairs,
        span_s=span,
        aggregate_rate=rate,
        mean_inter_contact=per_pair,
        overall_mean_inter_contact=(math.fsum(all_gaps) / len(all_gaps)) if all_gaps else None,
        duration_min=min(durations),
        duration_mean=math.fsum(durations) / len(durations),
        duration_median=statistics.median(durations),
        duration_max=max(durations),
    )
