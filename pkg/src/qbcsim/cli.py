"""Command line entry point: ``qbcsim run`` and ``qbcsim probe``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import ConfigError, ExperimentConfig, ProbeTooLarge, concealment_probe, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbcsim", description="Quantum bit commitment attack simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded Monte-Carlo campaign")
    run.add_argument("--config", required=True, help="JSON experiment config")
    run.add_argument("--seed", type=int, help="override base_seed")
    run.add_argument("--trials", type=int, help="override the number of trials")
    run.add_argument("--out", help="report path (rows are streamed as they are produced)")
    run.add_argument("--format", choices=["json", "csv"], help="report format")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    probe = sub.add_parser("probe", help="exact concealment probe at small parameters")
    probe.add_argument("--config", required=True, help="JSON experiment config")
    probe.add_argument("--seed", type=int, help="override base_seed (selects the permutation family)")
    probe.add_argument("--leak-z", action="store_true", help="probe the broken variant that announces z")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = ExperimentConfig.load(args.config).with_overrides(base_seed=args.seed)
        if args.command == "run":
            cfg = cfg.with_overrides(
                trials=args.trials, output_path=args.out, output_format=args.format
            )
            report = run_experiment(cfg, workers=args.workers)
            print(json.dumps(report.aggregate, indent=2, sort_keys=True))
        else:
            value = concealment_probe(cfg, leak_z=args.leak_z)
            print(json.dumps({"trace_distance": value}))
    except (ConfigError, ProbeTooLarge) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
