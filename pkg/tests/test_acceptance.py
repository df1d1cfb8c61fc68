"""Acceptance criteria, one test each. Each prints a PASS/FAIL line."""

from __future__ import annotations

import io
import time
from pathlib import Path

import numpy as np

from ciser_dtn.analysis import (
    endemic_equilibrium,
    equilibrium_residuals,
    mpe_stability,
    r0,
    r0_closed_form,
    random_params,
)
from ciser_dtn.cli import main, run_many
from ciser_dtn.metrics import (
    NoMessagesCreated,
    delivery_ratio,
    mean_delivery_delay,
    overhead_ratio,
    spread,
)
from ciser_dtn.model import BASELINE, BASELINE_INITIAL, integrate
from ciser_dtn.sim.config import load_config
from ciser_dtn.sim.engine import Simulator
from ciser_dtn.sim.output import report_at
from ciser_dtn.spline import error_bound, evaluate_many, fit_not_a_knot
from ciser_dtn.traces import (
    TraceReplay,
    active_links,
    export_contact_trace,
    parse_contact_trace,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
DRAWS = 1000


def draws(seed: int, n: int = DRAWS):
    rng = np.random.default_rng(seed)
    return [random_params(rng) for _ in range(n)]


def test_criterion_01_conservation(criterion):
    start = time.perf_counter()
    traj = integrate("ciser", BASELINE_INITIAL, BASELINE, 0.0, 730.0, 0.1)
    elapsed = time.perf_counter() - start
    drift = float(np.max(np.abs(traj.states.sum(axis=1) + traj.dead - traj.dead[0] - 1.0)))
    criterion(
        1,
        drift <= 1e-9 and elapsed < 1.0 and len(traj) == 7301,
        f"max |sum + D - D0 - 1| = {drift:.2e} over {len(traj)} rows in {elapsed:.3f} s",
    )


def test_criterion_02_r0_oracles(criterion):
    start = time.perf_counter()
    worst_spectral = worst_trace = 0.0
    for p in draws(2):
        rn = r0(p)
        worst_spectral = max(worst_spectral, abs(rn.closed_form - rn.spectral) / rn.closed_form)
        worst_trace = max(worst_trace, abs(rn.closed_form - rn.trace) / rn.closed_form)
    elapsed = time.perf_counter() - start
    criterion(
        2,
        worst_spectral <= 1e-10 and worst_trace <= 1e-10 and elapsed < 5.0,
        f"worst relative gap spectral {worst_spectral:.1e}, trace {worst_trace:.1e}, {elapsed:.2f} s",
    )


def test_criterion_03_threshold_identity(criterion):
    worst, count = 0.0, 0
    for p in draws(3):
        eq = endemic_equilibrium(p)
        if eq is not None:
            count += 1
            worst = max(worst, abs(eq.s_bar * eq.r0 - 1.0))
    criterion(3, count > 0 and worst <= 1e-10, f"max |S_bar R0 - 1| = {worst:.1e} over {count} draws")


def test_criterion_04_endemic_existence_and_residuals(criterion):
    mismatches, worst, count = 0, 0.0, 0
    for p in draws(4):
        eq = endemic_equilibrium(p)
        if (eq is not None) != (r0_closed_form(p) > 1.0):
            mismatches += 1
        if eq is not None:
            count += 1
            worst = max(worst, float(np.max(np.abs(equilibrium_residuals(p, eq)))))
    criterion(
        4,
        mismatches == 0 and worst <= 1e-9,
        f"{mismatches} existence mismatches, max residual {worst:.1e} over {count} endemic points",
    )


def test_criterion_05_stability_cross_validation(criterion):
    rng = np.random.default_rng(5)
    agree = total = 0
    worst_root = 0.0
    while total < DRAWS:
        p = random_params(rng)
        rep = mpe_stability(p)
        c4 = p.omega + p.mu
        worst_root = max(worst_root, float(np.min(np.abs(rep.eigenvalues + c4))))
        if abs(r0_closed_form(p) - 1.0) <= 1e-3:
            continue
        total += 1
        agree += rep.verdict_closed == rep.verdict_numeric
    criterion(
        5,
        agree >= 999 and worst_root <= 1e-10,
        f"verdicts agree on {agree}/{total} draws, root -(omega+mu) found to {worst_root:.1e}",
    )


def test_criterion_06_baseline_headline(criterion):
    value = r0_closed_form(BASELINE)
    rep = mpe_stability(BASELINE)
    traj = integrate("ciser", BASELINE_INITIAL, BASELINE, 0.0, 730.0, 0.1)
    i0, i_end = traj.column("I")[0], traj.column("I")[-1]
    ok = value < 1 and abs(value - 1.48e-3) < 1e-5 and rep.verdict_closed and i_end < i0
    criterion(
        6,
        ok,
        f"R0 = {value:.6e}, MPE {rep.closed_label}, I(0) = {i0:.3g}, I(730) = {i_end:.3g}",
    )


def sin_error(n: int) -> tuple[float, float]:
    x = np.linspace(0.0, 2.0 * np.pi, n)
    s = fit_not_a_knot(x, np.sin(x))
    xs = np.linspace(0.0, 2.0 * np.pi, 40001)
    return float(np.max(np.abs(evaluate_many(s, xs) - np.sin(xs)))), s.max_spacing


def test_criterion_07_spline(criterion):
    traj = integrate("ciser", BASELINE_INITIAL, BASELINE, 0.0, 730.0, 0.1)
    knot_resid = 0.0
    for k in range(traj.states.shape[1]):
        y = traj.states[:, k]
        s = fit_not_a_knot(traj.times, y)
        knot_resid = max(knot_resid, float(np.max(np.abs(evaluate_many(s, traj.times) - y))))
    e1, h1 = sin_error(129)
    e2, h2 = sin_error(257)
    ratio = e1 / e2
    within = e1 <= error_bound(h1, 1.0) and e2 <= error_bound(h2, 1.0)
    criterion(
        7,
        knot_resid <= 1e-12 and 12.0 <= ratio <= 20.0 and within,
        f"knot residual {knot_resid:.1e}, halving ratio {ratio:.2f}, "
        f"error {e2:.2e} <= bound {error_bound(h2, 1.0):.2e}: {within}",
    )


def test_criterion_08_determinism(criterion, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    desk = str(CONFIGS / "desk.cfg")
    for name in ("a", "b"):
        main(["simulate", "--config", desk, "--seed", "11", "--out", str(tmp_path / name)])
    same_runs = all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        for f in ("summary.csv", "census.csv")
    )
    for threads in ("1", "2"):
        monkeypatch.setenv("CISER_DTN_THREADS", threads)
        main(["compare", "--scenario", desk, "--seeds", "2", "--out", str(tmp_path / f"t{threads}")])
    run_files = sorted(p.relative_to(tmp_path / "t1") for p in (tmp_path / "t1").rglob("*.csv"))
    same_threads = bool(run_files) and all(
        (tmp_path / "t1" / f).read_bytes() == (tmp_path / "t2" / f).read_bytes() for f in run_files
    )
    criterion(
        8,
        same_runs and same_threads,
        f"rerun identical: {same_runs}; {len(run_files)} files identical across 1 and 2 workers: "
        f"{same_threads}",
    )


def test_criterion_09_desk_scale_comparison(criterion):
    base = load_config(CONFIGS / "desk.cfg")
    seeds = range(10)
    start = time.perf_counter()
    results = run_many([base.replace(policy=p, seed=s) for p in ("sir", "ciser") for s in seeds])
    elapsed = time.perf_counter() - start
    med = {}
    for policy in ("sir", "ciser"):
        reps = [report_at(r) for r in results if r.policy == policy]
        med[policy] = {
            "OR": spread(r.overhead_ratio for r in reps).median,
            "DD": spread(r.mean_delivery_delay for r in reps).median,
            "DR": spread(r.delivery_ratio for r in reps).median,
        }
    sir, cis = med["sir"], med["ciser"]
    ok = (
        cis["OR"] <= 0.7 * sir["OR"]
        and cis["DD"] <= 0.9 * sir["DD"]
        and cis["DR"] >= sir["DR"]
        and elapsed <= 300.0
    )
    criterion(
        9,
        ok,
        f"median OR {cis['OR']:.2f} vs {sir['OR']:.2f}, DD {cis['DD']:.0f} vs {sir['DD']:.0f} s, "
        f"DR {cis['DR']:.3f} vs {sir['DR']:.3f}, {elapsed:.1f} s",
    )


# 20 hand-specified contacts among three nodes, with overlaps and touching ends
HAND_TRACE = """\
# start end a b
0 30 A B
10 40 B C
25 60 A B
40 45 A C
60 90 B C
60 61 A B
75 120 A C
100 100 A B
110 150 B C
115 130 A B
140 200 A C
150 155 B C
160 170 A B
165 175 A B
180 240 B C
200 210 A C
205 260 A B
230 231 A C
250 300 B C
290 310 A C
"""


def test_criterion_10_trace_pipeline(criterion):
    ds = parse_contact_trace(io.StringIO(HAND_TRACE), "whitespace")
    buf = io.StringIO()
    export_contact_trace(ds, buf)
    again = parse_contact_trace(io.StringIO(buf.getvalue()))
    replay = TraceReplay(ds)
    cfg = load_config(CONFIGS / "desk.cfg", {"n_nodes": "3", "connectivity": "trace:hand",
                                             "scan_interval": "5"})
    sim = Simulator(cfg, trace=ds)
    ticks = np.arange(ds.span[0], ds.span[1] + 1e-9, cfg.scan_interval)
    mismatches = 0
    for t in ticks:
        brute = sorted({r.pair for r in ds.records if r.start <= t < r.end})
        if not (replay.links(t) == active_links(ds, t) == sim.scan_tick(float(t)) == brute):
            mismatches += 1
    criterion(
        10,
        len(ds.records) == 20 and again == ds and mismatches == 0,
        f"{len(ds.records)} records round-trip equal: {again == ds}; "
        f"{mismatches} link-set mismatches over {len(ticks)} scan ticks",
    )


def test_criterion_11_metric_identities(criterion):
    checks = [
        overhead_ratio(10, 5) == 1.0,
        overhead_ratio(5, 5) == 0.0,
        overhead_ratio(7, 0) is None,
        delivery_ratio(0, 10) == 0.0,
        delivery_ratio(10, 10) == 1.0,
        delivery_ratio(7, 20) == 0.35,
        mean_delivery_delay([(0, 10)]) == 10.0,
        mean_delivery_delay([(0, 10), (0, 30)]) == 20.0,
        mean_delivery_delay([]) is None,
    ]
    try:
        delivery_ratio(0, 0)
        checks.append(False)
    except NoMessagesCreated:
        checks.append(True)
    criterion(11, all(checks), f"{sum(checks)}/{len(checks)} exact identities hold")
