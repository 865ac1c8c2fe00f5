"""Command-line front end.

    securezono run CONFIG [--seed N] [--steps N] [--pruning NAME] [--out-dir DIR] [--modified-estimate]
    securezono check-observability CONFIG [--combo-size N]
    securezono build-scenarios [--out-dir DIR] [--calibration-runs N]

The output directory is taken from ``--out-dir``, then the
``SECUREZONO_OUT_DIR`` environment variable, then the config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import estimator as E
from . import sim
from .model import check_redundant_observability

log = logging.getLogger("securezono")


def _apply_overrides(cfg: sim.ScenarioConfig, args) -> sim.ScenarioConfig:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.steps is not None:
        cfg = replace(cfg, steps=args.steps)
    if args.pruning is not None:
        name, gens = E.parse_pruning(args.pruning)
        gens = gens if gens is not None else cfg.estimator.max_generators
        cfg = replace(cfg, estimator=replace(cfg.estimator, pruning=name, max_generators=gens))
    if args.modified_estimate:
        cfg = replace(cfg, estimator=replace(cfg.estimator, modified_estimate_enabled=True))
        point = cfg.point or sim.PointConfig()
        if point.schedule is None:
            log.info("no radius schedule in config; calibrating")
            schedule = sim.calibrate_schedule(replace(cfg, point=point), attack_free=False)
            point = replace(point, schedule=schedule)
        cfg = replace(cfg, point=point)
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(sim.ScenarioConfig.load(args.config), args)
    out_dir = sim.resolve_out_dir(cfg, args.out_dir)
    try:
        trace = sim.run_scenario(cfg, record_sets=not args.no_sets, analysis=not args.no_analysis)
    except ValueError as exc:
        print(f"configuration rejected: {exc}", file=sys.stderr)
        return 3
    trace.write(out_dir)
    last = trace.records[-1]
    steps_done = last["step"]
    print(f"{cfg.name}: {steps_done}/{cfg.steps} steps, inclusion {'held' if trace.inclusion_all else 'FAILED'}, "
          f"final members {last.get('member_count', '-')}, final radius {last.get('radius', float('nan')):.6g}")
    if trace.error:
        print(f"error: {trace.error}", file=sys.stderr)
    print(f"wrote {Path(out_dir) / 'trace.jsonl'} and {Path(out_dir) / 'metrics.csv'}")
    return trace.exit_code


def cmd_check(args) -> int:
    cfg = sim.ScenarioConfig.load(args.config)
    size = args.combo_size or cfg.estimator.agreement_size
    report = check_redundant_observability(cfg.plant.A, cfg.plant.sensors, size, args.obs_tol or cfg.obs_tol)
    print(json.dumps(report.to_dict(), indent=2))
    if not report.passed:
        print(f"failing sensor sets: {report.failing}", file=sys.stderr)
        return 1
    return 0


def cmd_build(args) -> int:
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    planar = sim.planar_scenario()
    planar.save(out / "planar.json")
    building = sim.building_scenario()
    schedule = sim.calibrate_schedule(building, runs=args.calibration_runs, attack_free=False)
    building = sim.building_scenario(modified=True, schedule=schedule, pole_radius=building.point.pole_radius)
    building.save(out / "building.json")
    print(f"wrote {out / 'planar.json'} and {out / 'building.json'}")
    print(f"building radius schedule: {json.dumps(schedule.to_dict())}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="securezono", description="Secure set-based state estimation simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write trace.jsonl and metrics.csv")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--pruning", help="none, drop_empty_and_subsets, merge_intersecting, overbound_all, reduce_order(N)")
    run.add_argument("--out-dir")
    run.add_argument("--modified-estimate", action="store_true", help="clip the estimate around the point estimate")
    run.add_argument("--no-sets", action="store_true", help="omit set payloads from the trace")
    run.add_argument("--no-analysis", action="store_true", help="skip ground-truth threshold reports")
    run.set_defaults(func=cmd_run)

    chk = sub.add_parser("check-observability", help="report observability of every sensor subset")
    chk.add_argument("config")
    chk.add_argument("--combo-size", type=int)
    chk.add_argument("--obs-tol", type=float)
    chk.set_defaults(func=cmd_check)

    bld = sub.add_parser("build-scenarios", help="write the planar and building scenario configs")
    bld.add_argument("--out-dir")
    bld.add_argument("--calibration-runs", type=int, default=8)
    bld.set_defaults(func=cmd_build)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
