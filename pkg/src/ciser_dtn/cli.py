"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
Diagnostics go to standard error; data goes to files or standard output.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from . import __version__
from .analysis import ANALYZE_COLUMNS, analyze, random_params
from .metrics import fmt_cell, spread, summarize
from .model import (
    BASELINE_FILE,
    SirState,
    integrate,
    load_params,
    read_trajectory_csv,
    write_trajectory_csv,
)
from .sim.config import ConfigInvalid, SimConfig, config_from_mapping, config_hash, load_config
from .sim.engine import SimResult, run_simulation
from .sim.output import (
    header_lines,
    infected_fraction,
    read_summary,
    report_at,
    write_census,
    write_events,
    write_header,
    write_summary,
)
from .spline import SplineError, estimate_f4_max, evaluate_many, fit_not_a_knot, fit_report
from .traces import TraceError, export_contact_trace, parse_contact_trace, trace_stats

log = logging.getLogger("ciser_dtn")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

SECONDS_PER_UNIT = {"second": 1.0, "minute": 60.0, "hour": 3600.0, "day": 86400.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _open_out(path: str | None) -> IO[str]:
    if path is None or path == "-":
        return sys.stdout
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def _close(fh: IO[str]) -> None:
    if fh is not sys.stdout:
        fh.close()


def _overrides(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigInvalid([f"--set expects key=value, got {item!r}"])
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _scenario(path: str | None, overrides: dict[str, str]) -> SimConfig:
    if path is None:
        return config_from_mapping(overrides)
    return load_config(path, overrides)


# -- integrate -------------------------------------------------------------


def cmd_integrate(args: argparse.Namespace) -> int:
    pf = load_params(args.params) if args.params else BASELINE_FILE
    initial = pf.initial
    if args.system == "sir":
        initial = SirState(initial.s, initial.e + initial.i + initial.c, initial.r)
    traj = integrate(
        args.system, initial, pf.params, args.t0, args.t1, args.step, recruitment=args.recruitment
    )
    fh = _open_out(args.out)
    try:
        extra = {"system": args.system, "step": args.step, "time_unit": pf.params.time_unit}
        write_trajectory_csv(traj, fh, header_lines(None, **extra))
    finally:
        _close(fh)
    return EXIT_OK


# -- analyze ---------------------------------------------------------------


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.random is not None:
        rng = np.random.default_rng(args.seed)
        param_sets = [random_params(rng) for _ in range(args.random)]
    else:
        pf = load_params(args.params) if args.params else BASELINE_FILE
        param_sets = [pf.params]
    fh = _open_out(args.out)
    try:
        write_header(fh, header_lines(None))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANALYZE_COLUMNS)
        for p in param_sets:
            row = analyze(p)
            w.writerow([fmt_cell(row[c]) for c in ANALYZE_COLUMNS])
    finally:
        _close(fh)
    return EXIT_OK


# -- spline-fit ------------------------------------------------------------


def cmd_spline_fit(args: argparse.Namespace) -> int:
    with open(args.trajectory, encoding="utf-8") as fh:
        times, columns = read_trajectory_csv(fh)
    if args.every < 1:
        raise ValueError("--every must be at least 1")
    idx = np.arange(0, len(times), args.every)
    if idx[-1] != len(times) - 1:
        idx = np.append(idx, len(times) - 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = header_lines(None, source=args.trajectory, every=args.every)
    local_rows, global_rows, report_rows = [], [], []
    for name, values in columns.items():
        spline = fit_not_a_knot(times[idx], values[idx])
        f4 = estimate_f4_max(spline)
        rep = fit_report(spline, times, values, f4)
        knot_resid = float(np.max(np.abs(evaluate_many(spline, times[idx]) - values[idx])))
        g = spline.global_coefficients()
        for k in range(len(spline.knots) - 1):
            lo, hi = fmt_cell(float(spline.knots[k])), fmt_cell(float(spline.knots[k + 1]))
            local_rows.append([name, lo, hi, *(fmt_cell(float(v)) for v in spline.coefficients[k])])
            global_rows.append([name, lo, hi, *(fmt_cell(float(v)) for v in g[k])])
        report_rows.append(
            [name, len(spline.knots), fmt_cell(rep.h), fmt_cell(rep.mse), fmt_cell(rep.error_bound),
             fmt_cell(knot_resid)]
        )
    piece_cols = ["compartment", "interval_lo", "interval_hi", "p0", "p1", "p2", "p3"]
    for fname, rows, cols in (
        ("pieces.csv", local_rows, piece_cols),
        ("pieces_global.csv", global_rows, piece_cols),
        ("fit_report.csv", report_rows,
         ["compartment", "knots", "h", "mse", "error_bound", "max_knot_residual"]),
    ):
        with open(out / fname, "w", encoding="utf-8", newline="") as fh:
            write_header(fh, header)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            w.writerows(rows)
    return EXIT_OK


# -- simulate --------------------------------------------------------------


def _write_run(out: Path, result: SimResult, events: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    header = header_lines(result.config_hash, [result.seed], policy=result.policy)
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        write_summary(fh, [report_at(result)], header)
    with open(out / "census.csv", "w", encoding="utf-8", newline="") as fh:
        write_census(fh, result.census, header)
    if events and result.events is not None:
        with open(out / "events.csv", "w", encoding="utf-8", newline="") as fh:
            write_events(fh, result.events, header)


def cmd_simulate(args: argparse.Namespace) -> int:
    overrides = _overrides(args.set)
    if args.policy is not None:
        overrides["policy"] = args.policy
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.trace is not None:
        overrides["connectivity"] = f"trace:{args.trace}"
    cfg = _scenario(args.config, overrides)
    result = run_simulation(cfg, record_events=args.events)
    _write_run(Path(args.out), result, args.events)
    rep = report_at(result)
    log.info(
        "%s seed %d: created %d delivered %d relayed %d",
        cfg.policy, cfg.seed, rep.created, rep.delivered, rep.relayed,
    )
    return EXIT_OK


# -- trace -----------------------------------------------------------------


def cmd_trace_parse(args: argparse.Namespace) -> int:
    with open(args.input, encoding="utf-8") as fh:
        ds = parse_contact_trace(fh, args.format, source=args.input)
    fh = _open_out(args.out)
    try:
        mapping = " ".join(f"{k}={lab}" for k, lab in enumerate(ds.node_ids))
        export_contact_trace(ds, fh, header_lines(None, source=args.input, node_map=mapping))
    finally:
        _close(fh)
    return EXIT_OK


def cmd_trace_stats(args: argparse.Namespace) -> int:
    with open(args.input, encoding="utf-8") as fh:
        ds = parse_contact_trace(fh, args.format, source=args.input)
    st = trace_stats(ds)
    fh = _open_out(args.out)
    try:
        write_header(fh, header_lines(None, source=args.input))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "value"])
        for key, value in st.rows():
            w.writerow([key, fmt_cell(value)])
    finally:
        _close(fh)
    return EXIT_OK


# -- metrics ---------------------------------------------------------------


def _summary_files(paths: Sequence[str]) -> Iterator[Path]:
    for p in map(Path, paths):
        if p.is_dir():
            yield from sorted(p.rglob("summary.csv"))
        else:
            yield p


SPREAD_COLUMNS = ("policy", "metric", "n", "median", "q1", "q3")


def cmd_metrics(args: argparse.Namespace) -> int:
    reports = []
    for path in _summary_files(args.inputs):
        with open(path, encoding="utf-8") as fh:
            reports.extend(read_summary(fh))
    if not reports:
        raise ValueError("no summary rows found")
    hashes = sorted({r.config_hash for r in reports})
    seeds = sorted({r.seed for r in reports})
    fh = _open_out(args.out)
    try:
        write_header(fh, header_lines(",".join(hashes), seeds))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPREAD_COLUMNS)
        for policy, by_metric in summarize(reports).items():
            for metric, sp in by_metric.items():
                w.writerow([policy, metric, sp.n, fmt_cell(sp.median), fmt_cell(sp.q1), fmt_cell(sp.q3)])
    finally:
        _close(fh)
    return EXIT_OK


# -- compare ---------------------------------------------------------------


def worker_count(jobs: int) -> int:
    """Pool size: ``CISER_DTN_THREADS`` if set, else the CPU count, capped by ``jobs``."""
    env = os.environ.get("CISER_DTN_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigInvalid([f"CISER_DTN_THREADS must be an integer, got {env!r}"]) from None
        if cap < 1:
            raise ConfigInvalid(["CISER_DTN_THREADS must be at least 1"])
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, jobs))


def run_many(configs: Sequence[SimConfig]) -> list[SimResult]:
    """Run independent scenarios, possibly in worker processes; order is preserved."""
    workers = worker_count(len(configs))
    if workers == 1:
        return [run_simulation(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_simulation, configs))


COMPARE_COLUMNS = (
    "horizon_s",
    "series",
    "seeds",
    "DR_median",
    "DR_q1",
    "DR_q3",
    "OR_median",
    "OR_q1",
    "OR_q3",
    "DD_median",
    "DD_q1",
    "DD_q3",
    "infected_fraction",
)


def approximation(cfg: SimConfig, params_path: str | None):
    """ODE trajectory on the census grid, as (time_s, I+C fraction) pairs."""
    pf = load_params(params_path) if params_path else BASELINE_FILE
    unit = SECONDS_PER_UNIT.get(pf.params.time_unit)
    if unit is None:
        raise ConfigInvalid([f"time_unit must be one of {sorted(SECONDS_PER_UNIT)}"])
    step = cfg.scan_interval / unit  # type: ignore[operator]
    traj = integrate("ciser", pf.initial, pf.params, 0.0, cfg.sim_duration / unit, step)
    infected = traj.column("I") + traj.column("C")
    return [(float(t) * unit, float(v)) for t, v in zip(traj.times, infected)]


def _infected_at(series: list[tuple[float, float]], horizon: float) -> float | None:
    value = None
    for t, v in series:
        if t > horizon + 1e-9:
            break
        value = v
    return value


def cmd_compare(args: argparse.Namespace) -> int:
    base = _scenario(args.scenario, _overrides(args.set))
    if args.seeds < 1:
        raise ConfigInvalid(["--seeds must be at least 1"])
    seeds = [args.first_seed + k for k in range(args.seeds)]
    horizons = (
        sorted(float(h) for h in args.horizons.split(","))
        if args.horizons
        else [base.sim_duration]
    )
    for h in horizons:
        if not 0 < h <= base.sim_duration:
            raise ConfigInvalid([f"horizon {h!r} outside (0, sim_duration]"])
    approx = approximation(base, args.params)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policies = ("sir", "ciser")
    configs = [base.replace(policy=p, seed=s) for p in policies for s in seeds]
    results = run_many(configs)
    chash = config_hash(base)
    header = header_lines(chash, seeds)

    runs_dir = out / "runs"
    for res in results:
        _write_run(runs_dir / f"{res.policy}-seed{res.seed}", res, events=False)

    rows = []
    for h in horizons:
        for policy in policies:
            reps = [report_at(r, h) for r in results if r.policy == policy]
            fracs = [
                _infected_at(infected_fraction(r, h), h) for r in results if r.policy == policy
            ]
            cells = []
            for values in (
                [r.delivery_ratio for r in reps],
                [r.overhead_ratio for r in reps],
                [r.mean_delivery_delay for r in reps],
            ):
                sp = spread(values)
                cells += [fmt_cell(sp.median), fmt_cell(sp.q1), fmt_cell(sp.q3)]
            rows.append([fmt_cell(h), policy, len(reps), *cells, fmt_cell(spread(fracs).median)])
        rows.append(
            [fmt_cell(h), "approximation", "", *([""] * 9), fmt_cell(_infected_at(approx, h))]
        )
    with open(out / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        write_header(fh, header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        w.writerows(rows)

    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        write_summary(fh, [report_at(r) for r in results], header)

    # shared time grid: census ticks, with the ODE sampled on the same ticks
    grids = {p: [infected_fraction(r) for r in results if r.policy == p] for p in policies}
    with open(out / "infected.csv", "w", encoding="utf-8", newline="") as fh:
        write_header(fh, header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "sir", "ciser", "approximation"])
        approx_at = dict(approx)
        times = [t for t, _ in grids["sir"][0]]
        for k, t in enumerate(times):
            med = [spread(series[k][1] for series in grids[p]).median for p in policies]
            w.writerow([fmt_cell(t), *map(fmt_cell, med), fmt_cell(approx_at.get(t))])
    return EXIT_OK


# -- dispatch --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ciser-dtn", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"ciser-dtn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("integrate", help="integrate the compartment ODE to a trajectory CSV")
    p.add_argument("--params", help="key = value parameter file (defaults to the 730-day set)")
    p.add_argument("--system", choices=("ciser", "sir"), default="ciser")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=730.0)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--recruitment", action="store_true", help="constant mu inflow into S")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("analyze", help="threshold and stability analysis as CSV rows")
    p.add_argument("--params")
    p.add_argument("--random", type=int, metavar="N", help="analyse N random parameter draws")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("spline-fit", help="fit not-a-knot splines to each trajectory column")
    p.add_argument("trajectory")
    p.add_argument("--every", type=int, default=1, help="use every k-th sample as a knot")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_spline_fit)

    p = sub.add_parser("simulate", help="run one seeded simulation")
    p.add_argument("--config", help="scenario file; flags override its keys")
    p.add_argument("--policy", choices=("sir", "ciser"))
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="replay this canonical trace instead of RWP mobility")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--events", action="store_true", help="also write events.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trace", help="contact trace utilities")
    tsub = p.add_subparsers(dest="trace_command", required=True, parser_class=_Parser)
    tp = tsub.add_parser("parse", help="normalise a trace to canonical CSV")
    tp.add_argument("input")
    tp.add_argument("--format", choices=("csv", "whitespace"), default="csv")
    tp.add_argument("--out")
    tp.set_defaults(func=cmd_trace_parse)
    ts = tsub.add_parser("stats", help="inter-contact and duration statistics")
    ts.add_argument("input")
    ts.add_argument("--format", choices=("csv", "whitespace"), default="csv")
    ts.add_argument("--out")
    ts.set_defaults(func=cmd_trace_stats)

    p = sub.add_parser("metrics", help="merge summary.csv files into per-policy spreads")
    p.add_argument("inputs", nargs="+", help="summary files or directories searched recursively")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="SIR vs CISER over seeds, plus the ODE approximation")
    p.add_argument("--scenario", help="scenario file")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--horizons", help="comma-separated horizons in seconds")
    p.add_argument("--params", help="model parameter file for the approximation curve")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        for problem in exc.problems:
            print(f"invalid configuration: {problem}", file=sys.stderr)
        return EXIT_INVALID
    except (TraceError, SplineError, ValueError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
