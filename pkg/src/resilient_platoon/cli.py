"""Command line entry point: ``platoon {tune,run,campaign,replay,coord}``.

Exit codes: 0 success, 1 configuration error, 2 runtime abort, 3 a requested
check failed (collision, unresolved topology, ...).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .coordinator import (
    AmbiguousClaimsError,
    InfeasibleTopologyError,
    MalformedMatrixError,
    TopologyMatrix,
    check_conditions,
    detect_false_broadcast,
    handle_merge,
    handle_split,
    isolate_compromised,
    solve_topology,
    tie_break,
)
from .dynamics import ActuationLimits
from .gains import (
    DEFAULT_H_RESOLUTION,
    NoFeasibleGainsError,
    InfeasibleHeadwayError,
    feasible_region,
    gains_for,
    string_stability_ok,
    tune_gains,
    write_region_csv,
)
from .harness.campaign import (
    CAMPAIGN_KINDS,
    DESK_RUNS,
    FULL_RUNS,
    format_summary,
    highway_base,
    run_campaign,
)
from .harness.config import ConfigError, load_config
from .harness.export import export_aggregate, export_metrics, export_runs, export_trace, fmt
from .harness.replay import MalformedTraceError, Overlay, replay_detector
from .harness.sim import SimulationAbort, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ConfigError(f"grid must look like lo:hi:count, got {text!r}") from exc


def cmd_tune(args) -> int:
    limits = ActuationLimits(args.u_min, args.u_max, args.v_max)
    if args.h is not None:
        gains = gains_for(args.d, args.h, args.v_des, limits, args.alpha)
    else:
        gains = tune_gains(args.d, args.v_des, limits, alpha=args.alpha,
                           resolution=args.resolution)
    report = string_stability_ok(gains)
    print(f"k = {gains.k:.6g}")
    print(f"h = {gains.h:.6g}")
    print(f"c = {gains.c:.6g}")
    print(f"alpha = {gains.alpha:.6g}")
    print(f"string stable: {'yes' if report.ok else 'no'}")
    for v in report.violations:
        print(f"  {v}")
    if args.region_csv:
        d_grid, h_grid = _grid(args.d_grid), _grid(args.h_grid)
        region = feasible_region(d_grid, h_grid, args.v_des, limits)
        write_region_csv(args.region_csv, d_grid, h_grid, region)
        print(f"feasible region written to {args.region_csv} ({int(region.sum())} feasible cells)")
    return EXIT_OK if report.ok or not args.check else EXIT_CHECK


def cmd_run(args) -> int:
    cfg = load_config(args.scenario)
    trace, metrics = run_scenario(cfg, record_trace=bool(args.trace))
    if args.trace:
        export_trace(trace, args.trace)
    if args.metrics:
        export_metrics(metrics, args.metrics)
    for name, key, value in metrics.as_rows():
        label = f"{name}[{key}]" if key else name
        print(f"{label:40s} {fmt(value)}")
    if args.check and metrics.collision:
        return EXIT_CHECK
    return EXIT_OK


def cmd_campaign(args) -> int:
    base = load_config(args.config) if args.config else highway_base(n=args.vehicles)
    n_runs = FULL_RUNS if args.full_scale else args.runs
    result = run_campaign(base, n_runs, args.kinds, master_seed=args.seed, workers=args.workers)
    print(format_summary(result))
    if args.out:
        export_aggregate(result, args.out)
    if args.runs_csv:
        export_runs(result, args.runs_csv)
    failed = any(r.error for r in result.records)
    if args.check and (failed or any(r.collision for r in result.records)):
        return EXIT_CHECK
    return EXIT_OK


def cmd_replay(args) -> int:
    overlay = None
    if args.overlay == "sinusoid":
        overlay = Overlay("sinusoid", a=args.a, f=args.f, phi=args.phi, start=args.start)
    elif args.overlay == "gaussian":
        overlay = Overlay("gaussian", sd=args.sd, seed=args.seed, start=args.start)
    result = replay_detector(args.trace, args.K, args.r_bar, args.persistence, overlay)
    if args.out:
        rows = [(t, vid, r) for vid, s in sorted(result.series.items())
                for t, r in zip(s.t, s.r)]
        rows.sort(key=lambda row: (row[0], row[1]))
        with Path(args.out).open("w") as fh:
            fh.write("t,vehicle_id,r\n")
            for t, vid, r in rows:
                fh.write(f"{fmt(t)},{vid},{fmt(r)}\n")
    for vid, s in sorted(result.series.items()):
        peak = max(s.r, default=0.0)
        alarm = "none" if s.alarm_time is None else fmt(s.alarm_time)
        print(f"vehicle {vid}: max r = {peak:.4g}, alarm at {alarm}")
    if args.expect_alarm and not result.alarms:
        return EXIT_CHECK
    if args.expect_quiet and result.alarms:
        return EXIT_CHECK
    return EXIT_OK


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(",")
        return int(a), int(b)
    except ValueError as exc:
        raise ConfigError(f"expected 'from,to', got {text!r}") from exc


def cmd_coord(args) -> int:
    try:
        D = TopologyMatrix.from_text(Path(args.topology).read_text())
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    forbidden = [_pair(x) for x in args.forbid]
    if args.broadcast:
        verdict = detect_false_broadcast(D)
        print(f"status: {verdict.status}")
        if verdict.suspect is not None:
            print(f"suspect: {verdict.suspect}")
        return EXIT_OK
    if args.isolate is not None:
        result = isolate_compromised(D, args.isolate, forbidden)
    elif args.merge is not None:
        result = handle_merge(D, args.merge)
    elif args.split is not None:
        result = handle_split(D, args.split)
    else:
        report = check_conditions(D)
        if report.valid and not forbidden:
            print("topology is valid")
            print(D.to_text(), end="")
            return EXIT_OK
        for v in report.violations:
            print(f"violation: {v}")
        optima = solve_topology(D, forbidden)
        print(f"{len(optima)} optimal topologies")
        for i, opt in enumerate(optima, 1):
            print(f"# optimum {i}: order {' '.join(map(str, opt.order()))}")
            print(opt.to_text(), end="")
        result = tie_break(optima, args.leader)
    print(f"# selected: order {' '.join(map(str, result.order()))}")
    print(result.to_text(), end="")
    if args.out:
        Path(args.out).write_text(result.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="platoon", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="synthesize k, h, c and optionally a feasible-region CSV")
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--v-des", type=float, required=True)
    p.add_argument("--u-min", type=float, required=True)
    p.add_argument("--u-max", type=float, required=True)
    p.add_argument("--v-max", type=float, required=True)
    p.add_argument("--h", type=float, help="use this headway instead of the lowest feasible one")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--resolution", type=float, default=DEFAULT_H_RESOLUTION)
    p.add_argument("--region-csv")
    p.add_argument("--d-grid", default="0.1:10:100")
    p.add_argument("--h-grid", default="0.01:1:100")
    p.add_argument("--check", action="store_true", help="exit 3 if the gains are not string stable")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("run", help="simulate one scenario file")
    p.add_argument("scenario")
    p.add_argument("--trace", help="trace CSV path")
    p.add_argument("--metrics", help="metrics CSV path")
    p.add_argument("--check", action="store_true", help="exit 3 on collision")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("campaign", help="randomized attack campaign")
    p.add_argument("--config", help="base scenario (defaults to the 11-vehicle highway setup)")
    p.add_argument("--vehicles", type=int, default=11)
    p.add_argument("--runs", type=int, default=DESK_RUNS)
    p.add_argument("--full-scale", action="store_true", help=f"{FULL_RUNS} runs per kind")
    p.add_argument("--kinds", nargs="+", default=list(CAMPAIGN_KINDS), choices=CAMPAIGN_KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="aggregate CSV path")
    p.add_argument("--runs-csv", help="per-run CSV path")
    p.add_argument("--check", action="store_true", help="exit 3 on any collision or failed run")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("replay", help="run the detector offline over a trace CSV")
    p.add_argument("trace")
    p.add_argument("--K", type=float, default=0.05)
    p.add_argument("--r-bar", type=float, default=0.75)
    p.add_argument("--persistence", type=float, default=0.5)
    p.add_argument("--overlay", choices=("none", "sinusoid", "gaussian"), default="none")
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--f", type=float, default=0.2)
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--sd", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--out", help="residual CSV path")
    p.add_argument("--expect-alarm", action="store_true")
    p.add_argument("--expect-quiet", action="store_true")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("coord", help="check or repair a topology file ('id pred succ' per line)")
    p.add_argument("topology")
    p.add_argument("--forbid", action="append", default=[], metavar="FROM,TO")
    p.add_argument("--leader", type=int, help="leader to keep when breaking ties")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--isolate", type=int, metavar="ID")
    grp.add_argument("--merge", type=int, metavar="ID")
    grp.add_argument("--split", type=int, metavar="ID")
    grp.add_argument("--broadcast", action="store_true",
                     help="treat rows as self-claims and look for a forged one")
    p.add_argument("--out")
    p.set_defaults(func=cmd_coord)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MalformedMatrixError, MalformedTraceError, NoFeasibleGainsError,
            InfeasibleHeadwayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleTopologyError, AmbiguousClaimsError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except SimulationAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
