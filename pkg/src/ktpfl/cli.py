"""Command line: ``ktpfl run CONFIG`` and ``ktpfl compare SUMMARY...``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import parse_config
from .errors import ConfigError, KtpflError
from .experiment import compare_runs, format_table, load_summary, run_experiment, write_table_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ktpfl", description="Federated knowledge-transfer simulations.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-round progress")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a YAML config")
    run.add_argument("config")
    run.add_argument("--output-dir", help="override the config's output_dir")
    run.add_argument("--seed", type=int, help="override the config's seed")

    cmp_ = sub.add_parser("compare", help="tabulate two or more summary.json files")
    cmp_.add_argument("summaries", nargs="+")
    cmp_.add_argument("--csv", help="also write the table as CSV")
    return p


def _run(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.output_dir is not None:
        cfg = dataclasses.replace(cfg, output_dir=args.output_dir)
    result = run_experiment(cfg)
    s = result.summary
    print(f"{cfg.algorithm} seed={cfg.seed} final_acc={s['final_avg_accuracy']:.4f} "
          f"best_acc={s['best_avg_accuracy']:.4f} -> {cfg.output_dir}")
    return EXIT_OK


def _compare(args) -> int:
    rows = compare_runs([load_summary(p) for p in args.summaries])
    print(format_table(rows))
    if args.csv:
        write_table_csv(args.csv, rows)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args) if args.command == "run" else _compare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KtpflError, ArithmeticError, ValueError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
