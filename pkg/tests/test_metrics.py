from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ciser_dtn.metrics import (
    CensusRow,
    MetricsReport,
    NoMessagesCreated,
    build_report,
    delivery_ratio,
    fmt_cell,
    infected_series,
    mean_delivery_delay,
    overhead_ratio,
    parse_cell,
    spread,
    summarize,
)


@pytest.mark.parametrize("delivered,created,expected", [(0, 10, 0.0), (10, 10, 1.0), (7, 20, 0.35)])
def test_delivery_ratio(delivered, created, expected):
    assert delivery_ratio(delivered, created) == expected


def test_delivery_ratio_errors():
    with pytest.raises(NoMessagesCreated):
        delivery_ratio(0, 0)
    with pytest.raises(ValueError):
        delivery_ratio(5, 4)


@pytest.mark.parametrize("relayed,delivered,expected", [(10, 5, 1.0), (5, 5, 0.0), (7, 0, None)])
def test_overhead_ratio(relayed, delivered, expected):
    assert overhead_ratio(relayed, delivered) == expected


def test_mean_delivery_delay():
    assert mean_delivery_delay([(0, 10)]) == 10
    assert mean_delivery_delay([(0, 10), (0, 30)]) == 20
    assert mean_delivery_delay([]) is None
    with pytest.raises(ValueError):
        mean_delivery_delay([(5, 1)])


@given(st.integers(0, 10_000), st.integers(1, 10_000))
def test_overhead_is_relay_ratio_minus_one(relayed, delivered):
    assert overhead_ratio(relayed, delivered) == pytest.approx(relayed / delivered - 1.0)


def test_undefined_serialises_empty():
    assert fmt_cell(None) == ""
    assert fmt_cell(True) == "true"
    assert fmt_cell(0.1) == "0.1"
    assert parse_cell("") is None and parse_cell("0.25") == 0.25


def row(t, msg, s=0, e=0, i=0, c=0, r=0):
    return CensusRow(t, msg, s, e, i, c, r, dead=0)


def test_infected_series_all_susceptible():
    census = [row(t, 0, s=5) for t in (0.0, 10.0, 20.0)]
    assert infected_series(census) == [(0.0, 0), (10.0, 0), (20.0, 0)]


def test_infected_series_carriers_flag():
    census = [row(0.0, 0, s=3, i=1, c=1), row(0.0, 1, s=4, i=1), row(10.0, 0, i=2, c=3)]
    assert infected_series(census) == [(0.0, 3), (10.0, 5)]
    assert infected_series(census, include_carriers=False) == [(0.0, 2), (10.0, 2)]


def test_infected_series_keeps_empty_samples():
    census = [row(20.0, 0, i=1, s=1)]
    assert infected_series(census, times=[0.0, 10.0, 20.0]) == [(0.0, 0), (10.0, 0), (20.0, 1)]


def test_build_report_undefined_cells():
    rep = build_report("sir", 1, "abc", 4, 0, 3, [])
    assert rep.delivery_ratio == 0.0
    assert rep.overhead_ratio is None and rep.mean_delivery_delay is None


def test_spread_and_summarize():
    assert spread([None, None]).n == 0
    sp = spread([1.0, 2.0, 3.0, 4.0, None])
    assert (sp.median, sp.q1, sp.q3, sp.n) == (2.5, 1.75, 3.25, 4)
    reps = [
        MetricsReport("ciser", s, "h", 10, d, 2 * d, d / 10, 1.0 if d else None, 5.0)
        for s, d in enumerate([0, 2, 4])
    ]
    out = summarize(reps)
    assert out["ciser"]["OR"].n == 2
    assert out["ciser"]["DR"].median == pytest.approx(0.2)
