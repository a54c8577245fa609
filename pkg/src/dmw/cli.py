"""Command-line entry point: one subcommand per experiment."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .core import DmwError
from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, run_experiment, write_outputs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmw", description="Distance-matrix Wasserstein experiments.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--out", help="output directory (default: dmw-out/<experiment>)")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")
        p.add_argument("--threads", type=int, help="worker threads for independent cells")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="record file format")
        p.add_argument("--verbose", action="store_true")
    return parser


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = {"seed": args.seed, "threads": args.threads}
        if args.config:
            config = load_config(args.config, **overrides)
            if config.experiment != args.experiment:
                raise ConfigError(f"config is for {config.experiment!r}, not {args.experiment!r}")
        else:
            config = ExperimentConfig.from_mapping({"experiment": args.experiment}, **overrides)
        out = args.out or config.out_dir or os.path.join("dmw-out", args.experiment)
        result = run_experiment(config)
        files = write_outputs(result, out, args.format)
    except ConfigError as exc:
        return _error("ConfigError", str(exc), 2)
    except DmwError as exc:
        return _error(type(exc).__name__, str(exc), 1)
    except OSError as exc:
        return _error("OSError", str(exc), 1)
    print(json.dumps({"experiment": config.experiment, "records": len(result.records), "files": files}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
