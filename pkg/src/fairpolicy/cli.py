"""Command line entry point: ``fairpolicy run`` and ``fairpolicy summarize``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .errors import FairPolicyError
from .harness import SUMMARY_HEADER, load_config, run_experiment, summarize_runs


def _window(text: str):
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"window must look like T1:T2, got {text!r}") from err
    if not 1 <= a < b:
        raise argparse.ArgumentTypeError("window needs 1 <= T1 < T2")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairpolicy", description="Online fair decision-learning experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True, help="flat YAML/JSON key-value config")
    run.add_argument("--seed", type=int, action="append", help="override the seed list (repeatable)")
    run.add_argument("--out", help="override the output directory")
    summ = sub.add_parser("summarize", help="summarize finished runs")
    summ.add_argument("--runs", nargs="+", required=True, help="run directories holding metrics.csv")
    summ.add_argument("--window", type=_window, default=(125, 200), help="T1:T2 (inclusive), default 125:200")
    summ.add_argument("--out", help="summary.csv path (default: first run dir)")
    summ.add_argument("--no-figures", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed:
                cfg.seeds = args.seed
            if args.out:
                cfg.out_dir = args.out
            result = run_experiment(cfg)
            print(f"wrote {result['out_dir'] / 'metrics.csv'} ({len(result['series'])} runs)")
            for e in result["errors"]:
                print(f"FAILED {e['method']} seed {e['seed']}: {e['error']}: {e['message']}", file=sys.stderr)
            return 1 if result["errors"] else 0
        out = Path(args.out) if args.out else Path(args.runs[0]) / "summary.csv"
        result = summarize_runs(args.runs, args.window, out, figures=not args.no_figures)
        w = csv.DictWriter(sys.stdout, SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(result["rows"])
        for m in result["missing"]:
            print(f"missing: {m}", file=sys.stderr)
        return 2 if result["missing"] else 0
    except (FairPolicyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
