"""Command-line entry point: ``smbo-ensemble run|aggregate|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import BenchmarkConfig, ConfigError, aggregate, run_benchmark

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smbo-ensemble", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark config, skipping completed runs")
    run.add_argument("--config", required=True, type=Path, help="benchmark config (JSON)")
    run.add_argument("--out", type=Path, help="output directory (default: the config's output_directory)")
    run.add_argument("--jobs", type=int, default=1, help="runs executed in parallel")

    agg = sub.add_parser("aggregate", help="rebuild reports/ from the logs")
    agg.add_argument("--out", required=True, type=Path)

    rep = sub.add_parser("report", help="print the comparison table")
    rep.add_argument("--out", required=True, type=Path)
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            config = BenchmarkConfig.from_json(args.config)
            out = run_benchmark(config, args.out, jobs=args.jobs)
            print(out / "reports")
        elif args.command == "aggregate":
            if not (args.out / "config.json").exists():
                raise ConfigError(f"{args.out} has no config.json; run a benchmark there first")
            for path in aggregate(args.out):
                print(path)
        else:
            reports = args.out / "reports"
            if not (reports / "report.json").exists():
                if not (args.out / "config.json").exists():
                    raise ConfigError(f"{args.out} has no reports or config.json")
                aggregate(args.out)
            if args.format == "csv":
                sys.stdout.write((reports / "table.csv").read_text(encoding="utf-8"))
            else:
                doc = json.loads((reports / "report.json").read_text(encoding="utf-8"))
                sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit code 1
        logging.getLogger(__name__).debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
