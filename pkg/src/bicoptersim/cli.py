"""Command-line front end.

Subcommands: run, verify, sweep, presets.
Exit codes: 0 success, 1 usage error, 2 simulation failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields

from .presets import PRESETS, get_preset, parse_config_file


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="bicoptersim",
                description="Adaptive backstepping bicopter simulator")
    sub = p.add_subparsers(dest="command")

    pr = sub.add_parser("run", help="simulate one preset and write telemetry")
    pr.add_argument("preset", help="preset name or config-file path")
    pr.add_argument("--out", default="out", help="output directory")
    pr.add_argument("--dt", type=float, default=None)
    pr.add_argument("--duration", type=float, default=None)
    pr.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VAL", help="override any preset field")
    pr.add_argument("--no-plots", action="store_true")

    pv = sub.add_parser("verify", help="run the oracle battery")
    pv.add_argument("--seed", type=int, default=0)

    ps = sub.add_parser("sweep", help="run a gain grid, one metrics row each")
    ps.add_argument("grid", help="grid spec file")
    ps.add_argument("--out", default="sweep.csv")
    ps.add_argument("--jobs", type=int, default=1)

    sub.add_parser("presets", help="list built-in presets")
    return p


def _resolve_preset(args):
    if os.path.isfile(args.preset):
        preset = parse_config_file(args.preset)
    else:
        preset = get_preset(args.preset)
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise _UsageError(f"--set expects KEY=VAL, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.duration is not None:
        overrides["duration"] = args.duration
    return preset.with_overrides(**overrides) if overrides else preset


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("missing subcommand")

        if args.command == "presets":
            for name in sorted(PRESETS):
                p = PRESETS[name]
                print(f"{name:14s} kind={p.kind:9s} dt={p.dt:g} "
                      f"duration={p.resolved_duration():g} "
                      f"gains=({p.gamma1:g},{p.gamma2:g},{p.alpha1:g},{p.alpha2:g})")
            return 0

        if args.command == "run":
            from .harness import run
            try:
                preset = _resolve_preset(args)
            except KeyError as exc:
                raise _UsageError(str(exc)) from None
            metrics = run(preset, args.out, plots=not args.no_plots)
            for f in fields(metrics):
                print(f"{f.name}: {getattr(metrics, f.name)}")
            return 2 if metrics.guard_tripped else 0

        if args.command == "verify":
            from .harness import verify
            report = verify(seed=args.seed)
            print(report.text())
            return 0 if report.passed else 3

        if args.command == "sweep":
            from .harness import sweep
            n = sweep(args.grid, args.out, jobs=args.jobs)
            print(f"{n} grid points -> {args.out}")
            return 0

        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
