"""Command line: ``python -m pipevs run|sweep|replay``.

Exit codes: 0 success, 1 configuration error, 2 the episode ended in a crash
(metrics are still written).
"""

from __future__ import annotations

import argparse
import json
import sys

import yaml

from ..errors import ConfigError
from .config import bundled_scenario, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_CRASH = 0, 1, 2


def _scenario(path):
    if path is None:
        return load_scenario(bundled_scenario("default"))
    return load_scenario(path)


def _parse_values(text: str) -> list:
    return [yaml.safe_load(v) for v in text.split(",")]


def _cmd_run(args) -> int:
    from .episode import run_episode
    cfg = _scenario(args.scenario)
    overrides = {}
    if args.method:
        overrides["method"] = args.method
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    out = args.out or cfg.output_dir
    result = run_episode(cfg, out_dir=out, write=True, plots=not args.no_plots)
    print(json.dumps(result.metrics.to_dict(), indent=2, sort_keys=True))
    return EXIT_CRASH if result.metrics.crashed else EXIT_OK


def _cmd_sweep(args) -> int:
    from .sweep import sweep
    cfg = _scenario(args.scenario)
    if len(args.axis) != len(args.values):
        raise ConfigError("give one --values list per --axis")
    axes = {a: _parse_values(v) for a, v in zip(args.axis, args.values)}
    rows = sweep(cfg, axes, args.out, plots=not args.no_plots, workers=args.workers)
    for row in rows:
        print(f"{row['cell']:3d} {row['method']:14s} {row['scenario']:40s} "
              f"rmse_theta={row.get('rmse_theta')} rmse_r={row.get('rmse_r')} "
              f"{row.get('termination', row['status'])}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    from .metrics import replay
    print(json.dumps(replay(args.log), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipevs",
                                     description="Quadrotor pipeline visual-servoing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one closed-loop episode")
    run.add_argument("--scenario", help="scenario YAML (default: bundled default)")
    run.add_argument("--method", help="ibvs | ibvs-mpc | eskf-vmpc | eskf-pre-vmpc")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--no-plots", action="store_true")
    run.set_defaults(func=_cmd_run)

    sw = sub.add_parser("sweep", help="run a cross-product comparison")
    sw.add_argument("--scenario")
    sw.add_argument("--axis", action="append", required=True,
                    help="noise_sigma2 | wind | method | weights (repeatable)")
    sw.add_argument("--values", action="append", required=True,
                    help="comma-separated values for the matching --axis")
    sw.add_argument("--out", required=True)
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--no-plots", action="store_true")
    sw.set_defaults(func=_cmd_sweep)

    rp = sub.add_parser("replay", help="recompute metrics from a run log")
    rp.add_argument("--log", required=True)
    rp.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
