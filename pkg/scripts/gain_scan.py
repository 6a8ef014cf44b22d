#!/usr/bin/env python3
"""Grid scan of SPSA gains for the one-qubit low-count experiment.

Reports, for each (a, b, s) combination, the median SGQT final fidelity,
the median fidelity of SQT at the same photon budget and the paired win
rate. Used to choose the robust gain set shipped with the bench defaults.
"""

from __future__ import annotations

import argparse
import itertools

import numpy as np

from sgqtlab.bench import LOW_COUNT_1Q, ExperimentSpec, run_experiment
from sgqtlab.sgqt import GainSchedule


def scan(a_values, b_values, s_values, repetitions, workers):
    for a, b, s in itertools.product(a_values, b_values, s_values):
        gains = GainSchedule(a=a, b=b, s=s, t=0.101)
        spec = ExperimentSpec(kind=LOW_COUNT_1Q, name="gain-scan", gains=gains, repetitions=repetitions, seed=11)
        summary = run_experiment(spec, workers).summary
        final = [c for c in summary["comparisons"] if c["iteration"] == spec.iterations and c["sqt"].startswith("sqt")]
        c = final[0]
        yield a, b, s, c["median_sgqt"], c["median_sqt"], c["win_fraction"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="SPSA gain scan (one-qubit low count)")
    parser.add_argument("--a", type=float, nargs="+", default=[0.4, 0.8, 1.6, 3.0])
    parser.add_argument("--b", type=float, nargs="+", default=[0.1, 0.2, 0.35])
    parser.add_argument("--s", type=float, nargs="+", default=[0.602, 1.0])
    parser.add_argument("-r", "--repetitions", type=int, default=20)
    parser.add_argument("-j", "--workers", type=int, default=None)
    args = parser.parse_args(argv)

    print(f"{'a':>5} {'b':>5} {'s':>6}  {'sgqt':>7} {'sqt':>7} {'wins':>5}")
    best = None
    for a, b, s, f_sgqt, f_sqt, wins in scan(args.a, args.b, args.s, args.repetitions, args.workers):
        print(f"{a:5.2f} {b:5.2f} {s:6.3f}  {f_sgqt:7.4f} {f_sqt:7.4f} {wins:5.0%}")
        if best is None or f_sgqt > best[3]:
            best = (a, b, s, f_sgqt)
    if best is not None:
        print(f"best median SGQT fidelity {best[3]:.4f} at a={best[0]}, b={best[1]}, s={best[2]}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
