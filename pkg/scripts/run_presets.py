"""Simulate every named preset and print the checks against its published figures.

    python scripts/run_presets.py --reps 1000000 --out results/presets.csv
"""
import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ssrlab.cli import format_rows, result_row
from ssrlab.mc import run_scenario_multi
from ssrlab.presets import PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", help="comma-separated preset ids")
    ap.add_argument("--out")
    args = ap.parse_args()

    ids = args.only.split(",") if args.only else list(PRESETS)
    rows, failed = [], 0
    for pid in ids:
        p = PRESETS[pid]
        cfg = replace(p.config, reps=args.reps) if args.reps else p.config
        tests = p.tests or (cfg.final_test,)
        est = run_scenario_multi(cfg, tests, workers=args.workers)
        rows += [result_row(cfg, k, est[k]) for k in tests]
        for ok, line in p.evaluate(est):
            failed += not ok
            print(f"{'PASS' if ok else 'FAIL'} {pid}: {line}", file=sys.stderr)
    text = format_rows(rows, "csv")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
