"""Command-line entry point.

    gibbsroute <experiment> [--config FILE] [--seed N] [--out DIR] [--threads N] [--set key=value ...]
    gibbsroute run --config FILE

Without ``--config`` an experiment runs on its built-in parameters; with it,
the file must be complete (missing required keys are errors).  Exit status
is 0 on success, 2 on a validation error and 3 when a computation refuses
its input (budget exceeded, out of regime).
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, parse_value, defaults_for, load_config, parse_config
from .experiments import run

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or key = value file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads for independent parameter points")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one parameter")
    p = argparse.ArgumentParser(prog="gibbsroute", description="Gibbsian multihop routeing experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the experiment named in --config")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return p


def _resolve(args) -> ExperimentConfig:
    exp = None if args.command == "run" else args.command
    if args.config is None:
        if exp is None:
            raise ConfigError("config", "run needs --config")
        data = defaults_for(exp)
    else:
        data = load_config(args.config, exp).to_dict()
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        k, v = item.split("=", 1)
        data[k.strip()] = parse_value(v)
    for key in ("seed", "out", "threads"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    return parse_config(data, exp)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
    except ConfigError as e:
        print(f"gibbsroute: invalid configuration: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"gibbsroute: cannot read configuration: {e}", file=sys.stderr)
        return 2
    try:
        man = run(cfg)
    except ConfigError as e:
        print(f"gibbsroute: invalid configuration: {e}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as e:
        print(f"gibbsroute: {cfg.experiment} failed: {e}", file=sys.stderr)
        return 3
    for r in man.results:
        mark = " [flagged]" if r["flagged"] else ""
        print(f"{r['name']} = {r['value']}{mark}")
    for f in man.flags:
        print(f"flag: {f}")
    print(f"wrote {len(man.files)} files and manifest.json to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
