"""Command line interface: ``heatprod <command> --config cfg.json --out dir``.

Exit status is 0 when every check in the manifest passes, 1 when a check
fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, InvalidArgumentError
from . import runner
from .config import ScenarioConfig

COMMANDS = {
    "run": "driven trajectories with first-law and balance checks",
    "sweep": "heat versus field strength and scale, volume scaling fit",
    "taylor": "m-th eta derivative of the heat at eta = 0",
    "thermolimit": "heat in growing boxes with fixed field support",
    "decay": "local internal energy after the pulse (constant potential)",
    "oracle": "quasi-free engine against the Fock oracle",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatprod", description="Heat production in driven lattice fermions.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, action="append", help="override the seed list (repeatable)")
        if name in ("run", "sweep", "taylor", "thermolimit"):
            s.add_argument("--threads", type=int, default=1, help="worker processes")
        if name == "run":
            s.add_argument("--oracle", action="store_true", help="add Fock oracle columns on small boxes")
        if name == "taylor":
            s.add_argument("--m", type=int, default=None, help="derivative order (default from config)")
    return p


def _dispatch(args, cfg):
    if args.command == "run":
        return runner.run_scenario(cfg, threads=args.threads, out=args.out)
    if args.command == "sweep":
        return runner.scaling_sweep(cfg, threads=args.threads, out=args.out)
    if args.command == "taylor":
        return runner.taylor_estimate(cfg, args.m, threads=args.threads, out=args.out)
    if args.command == "thermolimit":
        return runner.thermolimit_sweep(cfg, threads=args.threads, out=args.out)
    if args.command == "decay":
        return runner.dissipation_probe(cfg, out=args.out)
    return runner.crosscheck_oracle(cfg, out=args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ScenarioConfig.from_json(args.config)
        if args.seed:
            cfg.seeds = list(args.seed)
        if getattr(args, "oracle", False):
            cfg.oracle = True
        cfg.validate()
        _, manifest = _dispatch(args, cfg)
    except ConfigError as exc:
        for f, m in zip(exc.fields, exc.messages):
            print(f"config error: {f}: {m}", file=sys.stderr)
        return 2
    except (InvalidArgumentError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for c in manifest.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} residual={c.residual:.3e} tol={c.tolerance:.3e}")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    sys.exit(main())
