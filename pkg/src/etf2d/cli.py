"""Command-line entry point: ``etf2d simulate|verify|monotonicity|reconstruct-check``."""

import argparse
import logging
import sys

from .errors import Etf2dError
from .harness import COMMANDS


def build_parser():
    p = argparse.ArgumentParser(prog="etf2d", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True,
                   help="scenario YAML file or bundled name (linear_small, ...)")
    p.add_argument("--trials", type=int, default=None, help="override the trial count")
    p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted scenario field override, value parsed as YAML; repeatable")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rep = COMMANDS[args.command](args.config, trials=args.trials, seed=args.seed,
                                     out=args.out, overrides=args.override)
    except Etf2dError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(f"{rep.command} {rep.scenario} seed={rep.seed} trials={rep.trials}")
        for line in rep.lines():
            print(line)
        print(f"summary: {rep.artifacts.get('summary')}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
