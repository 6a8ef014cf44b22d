#!/usr/bin/env python3
"""Run every bundled experiment config and print the headline comparisons.

Usage: python3 scripts/reproduce_all.py [-o runs/] [-j WORKERS] [--only NAME ...]
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from sgqtlab.cli import bundled_configs, cmd_run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("-o", "--output-root", default="runs")
    parser.add_argument("-j", "--workers", type=int, default=None)
    parser.add_argument("--only", nargs="*", default=None, help="config names to run (default: all)")
    args = parser.parse_args(argv)

    names = sorted(bundled_configs())
    if args.only:
        unknown = set(args.only) - set(names)
        if unknown:
            parser.error(f"unknown configs: {', '.join(sorted(unknown))}")
        names = [n for n in names if n in args.only]

    status = 0
    for name in names:
        out = Path(args.output_root) / name
        t0 = time.perf_counter()
        code = cmd_run(name, str(out), args.workers)
        elapsed = time.perf_counter() - t0
        if code != 0:
            print(f"{name}: failed with exit code {code}")
            status = code
            continue
        summary = json.loads((out / "summary.json").read_text())
        print(f"{name}  ({elapsed:.1f}s)")
        for c in summary["comparisons"]:
            print(
                f"  {c['sgqt']:>14} vs {c['sqt']:<16} it={c['iteration']!s:>4}"
                f"  median {c['median_sgqt']:.4f} / {c['median_sqt']:.4f}"
                f"  wins {c['win_fraction']:.0%}  reduction>0 {c['reduction_positive_fraction']:.0%}"
            )
    return status


if __name__ == "__main__":
    sys.exit(main())
