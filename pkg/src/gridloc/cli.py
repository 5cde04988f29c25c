"""Command-line interface.

Subcommands:
    make-map   render a prior map from a scenario world into tile files
    simulate   emit a RunLog for a scenario
    localize   run the localization pipeline over a map + runlog
    eval       tabulate and compare report directories
    oracle     cross-check the search against the brute-force sweep

Exit codes: 0 success, 1 oracle mismatch, 2 diverged run, 3 config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .oracle import oracle_search, random_instance
from .pipeline import (ConfigError, ExperimentConfig, availability,
                       compare_runs, format_comparison, load_report,
                       read_config, run_experiment)
from .priormap import MapError, save_map
from .registration import search
from .rng import stream
from .scenarios import get_scenario
from .simulate import simulate_run, write_runlog
from .simworld import render_prior

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_DIVERGED = 2
EXIT_CONFIG = 3


def _cmd_make_map(args) -> int:
    world, _traj, noise = get_scenario(args.scenario, args.seed)
    prior = render_prior(world, args.modality, args.resolution,
                         gap=noise.modality_gap,
                         occlusions=noise.occlusion_patches)
    manifest = save_map(prior, args.out)
    print(f"wrote {len(prior.tiles)} tiles at {args.resolution} m/cell -> {manifest}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    world, traj, noise = get_scenario(args.scenario, args.seed)
    log = simulate_run(world, traj, noise, args.seed)
    write_runlog(args.out, log)
    n_pts = sum(pts.shape[0] for _, pts in log.scans)
    print(f"wrote runlog: {log.truth.shape[0]} samples, {len(log.scans)} scans,"
          f" {n_pts} points -> {args.out}")
    return EXIT_OK


def _cmd_localize(args) -> int:
    overrides = {"out_dir": args.out}
    if args.map:
        overrides["map_path"] = args.map
    if args.runlog:
        overrides["runlog_path"] = args.runlog
    if args.odometry_only:
        overrides["updates_enabled"] = False
    if args.no_plots:
        overrides["plots"] = False
    if args.config:
        cfg = read_config(args.config, **overrides)
    else:
        cfg = ExperimentConfig(**overrides)
    report = run_experiment(cfg)
    agg = report.aggregates
    print(f"{report.label}: rmse lat/lon = "
          f"{agg['rmse_lateral']:.3f}/{agg['rmse_longitudinal']:.3f} m, "
          f"updates {agg['updates_applied']} applied / {agg['updates_gated']} gated, "
          f"diverged={report.diverged}")
    print(f"report -> {report.out_dir}")
    return EXIT_DIVERGED if report.diverged else EXIT_OK


def _cmd_eval(args) -> int:
    reports = [load_report(p) for p in args.reports]
    rows = compare_runs(reports)
    print(format_comparison(rows))
    print()
    for rep in reports:
        lat, lon = availability(rep, args.alert_limit)
        print(f"{rep.label}: availability at {args.alert_limit} m = "
              f"{lat:.2f}% lateral, {lon:.2f}% longitudinal")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    rng = stream(args.seed, "oracle-instances")
    worst = 0.0
    failures = 0
    for trial in range(args.trials):
        prior, local, center, spec, config = random_instance(rng)
        got = search(prior, local, center, spec, config)
        want = oracle_search(prior, local, center, spec, config)
        ok = True
        if got is None:
            ok = want.offset is None
            delta = 0.0
        elif want.offset is None:
            ok = False
            delta = float("nan")
        else:
            both = np.isfinite(got.score_field) & np.isfinite(want.score_field)
            same_nan = np.array_equal(np.isfinite(got.score_field),
                                      np.isfinite(want.score_field))
            delta = float(np.max(np.abs(got.score_field[both] - want.score_field[both]),
                                 initial=0.0))
            ok = (same_nan and delta <= 1e-12
                  and got.offset == want.offset)
        worst = max(worst, delta if np.isfinite(delta) else np.inf)
        if not ok:
            failures += 1
            print(f"trial {trial}: MISMATCH (max |dscore| = {delta:.3e})")
        elif args.verbose:
            print(f"trial {trial}: ok (max |dscore| = {delta:.3e})")
    print(f"{args.trials - failures}/{args.trials} trials matched,"
          f" worst score delta {worst:.3e}")
    return EXIT_OK if failures == 0 else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridloc",
        description="Cross-modal grid-map localization toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-map", help="render a prior map to tile files")
    p.add_argument("--scenario", default="desk-mcity")
    p.add_argument("--modality", choices=("aerial", "lidar"), default="aerial")
    p.add_argument("--resolution", type=float, default=0.08)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_make_map)

    p = sub.add_parser("simulate", help="emit a RunLog file")
    p.add_argument("--scenario", default="desk-mcity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output runlog path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("localize", help="run the localization pipeline")
    p.add_argument("--map", default="", help="prior map manifest path")
    p.add_argument("--runlog", default="", help="runlog path")
    p.add_argument("--config", default="", help="key = value config file")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--odometry-only", action="store_true")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("eval", help="compare report directories")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--alert-limit", type=float, default=0.29)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("oracle", help="brute-force registration cross-check")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MapError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
