"""Command line entry point: ``crs-maxmin {run,prop-check,bench}``.

Exit codes: 0 success, 1 property check failed, 2 bad scenario or
arguments, 3 solver failure, 4 file I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import checks, harness
from .baselines import Strategy, solve
from .channel import SystemConfig, db_to_linear, generate_channels
from .rates import InfeasibleSplitError
from .relay import select_centralized
from .sca import SCAFailure

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4


def _cmd_run(args) -> int:
    try:
        scenario = harness.load_scenario(args.scenario)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_IO
    except (harness.ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or harness.output_dir()
    report = harness.run_scenario(scenario, workers=args.workers)
    if not report.ok_rows:
        print(f"error: all {report.failures} solves failed", file=sys.stderr)
        return EXIT_SOLVER
    try:
        os.makedirs(out_dir, exist_ok=True)
        stem = os.path.join(out_dir, scenario.name)
        written = [harness.emit_csv(report, stem + ".csv"),
                   harness.emit_summary(report, stem + "_summary.csv"),
                   harness.emit_overhead(report, stem + "_overhead.csv")]
        if not args.no_plot:
            written.append(harness.emit_plot(report, stem + ".svg"))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    for (sweep, strategy, protocol), agg in report.aggregates().items():
        print(f"{scenario.sweep_kind}={sweep:g} {strategy:9s} {protocol:9s} mean={agg.mean:.4f} "
              f"n={agg.count} failed={agg.failures}")
    for path in written:
        print(f"wrote {path}")
    if report.failures:
        print(f"{report.failures} solve(s) failed and were excluded", file=sys.stderr)
    return EXIT_OK


def _cmd_prop_check(args) -> int:
    results = checks.run_all(quick=args.quick)
    for res in results:
        print(res.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY


def _cmd_bench(args) -> int:
    try:
        cfg = SystemConfig(args.users, args.antennas, db_to_linear(args.snr))
        strategy = Strategy(args.strategy)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    times, iters = [], []
    for r in range(args.repeats):
        ch = generate_channels(cfg, args.seed + r)
        grouping = select_centralized(ch, 1) if strategy.cooperative else None
        t0 = time.perf_counter()
        try:
            sol = solve(strategy, ch, grouping, cfg)
        except (SCAFailure, InfeasibleSplitError) as exc:
            print(f"error: solve {r} failed: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        times.append(time.perf_counter() - t0)
        iters.append(sol.iterations)
    t = np.array(times) * 1000
    print(f"{strategy.name} K={args.users} Nt={args.antennas} SNR={args.snr:g} dB, {args.repeats} solves")
    print(f"  wall ms: mean {t.mean():.1f}  median {np.median(t):.1f}  max {t.max():.1f}")
    print(f"  iterations: mean {np.mean(iters):.1f}  max {max(iters)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crs-maxmin", description="Cooperative rate-splitting max-min experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file and write CSV/SVG results")
    run.add_argument("scenario", help="YAML scenario file")
    run.add_argument("--out", help=f"output directory (default ${harness.OUTPUT_ENV} or ./results)")
    run.add_argument("--workers", type=int, default=1, help="parallel trial workers")
    run.add_argument("--no-plot", action="store_true", help="skip the SVG plot")
    run.set_defaults(func=_cmd_run)

    pc = sub.add_parser("prop-check", help="run the invariant suites")
    pc.add_argument("--quick", action="store_true", help="smaller sample counts")
    pc.set_defaults(func=_cmd_prop_check)

    b = sub.add_parser("bench", help="time single solves")
    b.add_argument("--users", type=int, default=3)
    b.add_argument("--antennas", type=int, default=2)
    b.add_argument("--snr", type=float, default=20.0, help="SNR in dB")
    b.add_argument("--strategy", default="CRS-SCA", help="CRS-SCA, CRS-grid, ERS, NRS or SDMA")
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
