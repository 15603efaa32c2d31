"""Command-line entry point: ``fypum <experiment> --config FILE [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 dataset error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..data import DatasetError
from . import harness
from .config import ConfigError, load_config

log = logging.getLogger("fypum")

EXIT_OK, EXIT_CONFIG, EXIT_DATASET = 0, 2, 3

COMMANDS = {
    "convergence": (harness.run_convergence, harness.convergence_plots),
    "monte-carlo": (harness.run_monte_carlo, harness.monte_carlo_plots),
    "scaling": (harness.run_scaling_validation, harness.scaling_plots),
    "subsample": (harness.run_subsample_benchmark, harness.subsample_plots),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fypum", description="Run choice-model estimation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON or YAML config file")
        p.add_argument("--out", default=None, help="output directory (default: config 'out' or ./results/<command>)")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--reps", type=int, default=None, help="override the replication count")
        p.add_argument("--no-plots", action="store_true", help="skip SVG output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    run, plot = COMMANDS[args.command]
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.reps is not None:
            cfg["reps"] = args.reps
        out = args.out or cfg.get("out") or f"results/{args.command}"
        log.info("running %s", args.command)
        report = run(cfg)
        if not args.no_plots and cfg.get("plots", True) and report.rows:
            plot(report, out)
        report.write(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    print(f"wrote {out}/report.csv ({len(report.rows)} rows)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
