"""Command-line entry point: ``countmix {table1,mixing,realdata,simulate}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .exceptions import CountMixError
from .experiments import EXPERIMENTS, load_config, parse_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="countmix", description=__doc__)
    parser.add_argument("--version", action="version", version=f"countmix {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="config file, or a result file with an embedded config")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit); overrides the config")
        p.add_argument("--out", help="output directory (default: results)")
        p.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key; repeatable")
    return parser


def _overrides(args) -> dict:
    out = {"experiment": args.experiment}
    if args.seed is not None:
        out["seed"] = args.seed
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise CountMixError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        ov = _overrides(args)
        if args.config:
            ov.pop("experiment")
            config = load_config(args.config, **ov)
            if config.experiment != args.experiment:
                raise CountMixError(f"config is for {config.experiment!r}, not {args.experiment!r}")
        else:
            config = parse_config("", **ov)
        paths = run_experiment(config, workers=args.workers, out=args.out)
    except (CountMixError, OSError) as exc:
        print(f"countmix: error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
