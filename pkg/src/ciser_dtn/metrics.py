"""Routing metrics: delivery ratio, overhead ratio, delivery delay.

Undefined values are represented by ``None`` and serialise as empty CSV cells.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class NoMessagesCreated(ValueError):
    pass


def delivery_ratio(delivered: int, created: int) -> float:
    if created <= 0:
        raise NoMessagesCreated("delivery ratio needs at least one created message")
    if not 0 <= delivered <= created:
        raise ValueError(f"need 0 <= delivered <= created, got {delivered}, {created}")
    return delivered / created


def overhead_ratio(relayed: int, delivered: int) -> float | None:
    """(relayed - delivered) / delivered, or None when nothing was delivered."""
    if relayed < 0 or delivered < 0:
        raise ValueError("counts must be non-negative")
    if delivered == 0:
        return None
    return (relayed - delivered) / delivered


def mean_delivery_delay(deliveries: Iterable[tuple[float, float]]) -> float | None:
    delays = []
    for created_at, delivered_at in deliveries:
        if delivered_at < created_at:
            raise ValueError("delivery precedes creation")
        delays.append(delivered_at - created_at)
    if not delays:
        return None
    return math.fsum(delays) / len(delays)


@dataclass(frozen=True)
class CensusRow:
    t: float
    msg_id: int
    s: int
    e: int
    i: int
    c: int
    r: int
    dead: int

    @property
    def alive(self) -> int:
        return self.s + self.e + self.i + self.c + self.r


def infected_series(
    census: Sequence[CensusRow],
    times: Sequence[float] | None = None,
    include_carriers: bool = True,
) -> list[tuple[float, int]]:
    """Infected-node count per census sample, summed over tracked messages.

    Carriers count as infected unless ``include_carriers`` is False. Passing
    the sample ``times`` keeps samples that have no tracked message yet.
    """
    totals: dict[float, int] = defaultdict(int)
    if times is not None:
        for t in times:
            totals[t] += 0
    for row in census:
        totals[row.t] += row.i + (row.c if include_carriers else 0)
    return sorted(totals.items())


@dataclass(frozen=True)
class MetricsReport:
    policy: str
    seed: int
    config_hash: str
    created: int
    delivered: int
    relayed: int
    delivery_ratio: float | None
    overhead_ratio: float | None
    mean_delivery_delay: float | None
    horizon: float | None = None


def build_report(
    policy: str,
    seed: int,
    config_hash: str,
    created: int,
    delivered: int,
    relayed: int,
    deliveries: Iterable[tuple[float, float]],
    horizon: float | None = None,
) -> MetricsReport:
    return MetricsReport(
        policy=policy,
        seed=seed,
        config_hash=config_hash,
        created=created,
        delivered=delivered,
        relayed=relayed,
        delivery_ratio=delivery_ratio(delivered, created) if created else None,
        overhead_ratio=overhead_ratio(relayed, delivered),
        mean_delivery_delay=mean_delivery_delay(deliveries),
        horizon=horizon,
    )


@dataclass(frozen=True)
class Spread:
    median: float | None
    q1: float | None
    q3: float | None
    n: int


def spread(values: Iterable[float | None]) -> Spread:
    """Median and quartiles of the defined values."""
    data = np.array([v for v in values if v is not None], dtype=float)
    if data.size == 0:
        return Spread(None, None, None, 0)
    q1, med, q3 = np.percentile(data, [25.0, 50.0, 75.0])
    return Spread(float(med), float(q1), float(q3), int(data.size))


def summarize(reports: Iterable[MetricsReport]) -> dict[str, dict[str, Spread]]:
    """Per-policy spreads of DR, OR and DD across seeds."""
    grouped: dict[str, list[MetricsReport]] = defaultdict(list)
    for rep in reports:
        grouped[rep.policy].append(rep)
    out: dict[str, dict[str, Spread]] = {}
    for policy in sorted(grouped):
        reps = grouped[policy]
        out[policy] = {
            "DR": spread(r.delivery_ratio for r in reps),
            "OR": spread(r.overhead_ratio for r in reps),
            "DD": spread(r.mean_delivery_delay for r in reps),
        }
    return out


def fmt_cell(value: object) -> str:
    """CSV cell text: None -> empty, floats at full precision, bools lower-case."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_cell(text: str) -> float | None:
    text = text.strip()
    return None if text == "" else float(text)
