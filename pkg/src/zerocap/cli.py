"""Command-line entry point: ``zerocap <command> [--config F] [--out D] [--seed N]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import COMMANDS, ExperimentConfig, MissingInputError, run
from .geometry import ConfigurationError

EXIT_FAIL, EXIT_CONFIG, EXIT_MISSING = 1, 2, 3


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zerocap", description="Construction, scans and modulus experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML file with experiment settings")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, help="random seed (overrides the config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
        if args.out:
            cfg.output_dir = args.out
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigurationError("seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        cfg.validate()
    except (ConfigurationError, TypeError, ValueError, OSError) as exc:
        print(f"zerocap: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = run(args.command, cfg)
    except MissingInputError as exc:
        print(f"zerocap: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigurationError as exc:
        print(f"zerocap: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for a in rep.assertions:
        print(f"criterion {a['criterion']} {'PASS' if a['passed'] else 'FAIL'} {a['name']}")
    print(f"{args.command}: {'all assertions passed' if rep.passed else 'some assertions failed'} "
          f"({rep.wall_time:.1f} s)")
    return 0 if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
