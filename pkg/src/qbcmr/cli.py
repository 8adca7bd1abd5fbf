"""Command line entry point: ``qbcmr <study> --config <path>``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from qbcmr.exceptions import ConfigError, NumericalError, ReplicationError
from qbcmr.harness import STUDIES, to_json, load_config, run_study

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("qbcmr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbcmr", description="Quasi-Bayes inference for conditional moment models.")
    parser.add_argument("study", choices=STUDIES)
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--seed", type=int, help="override the config's base seed")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, help="worker processes for replications")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if cfg.study != args.study:
            raise ConfigError(f"config declares study {cfg.study!r} but {args.study!r} was requested")
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            cfg = replace(cfg, workers=args.workers)
        summary = run_study(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ReplicationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc.cause, NumericalError) else 1
    print(to_json(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
