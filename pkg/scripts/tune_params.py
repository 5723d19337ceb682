#!/usr/bin/env python3
"""Random-search tuning for one catalog instance.

Runs the standard protocol (30 trials, each scored by the mean best objective
of 20 seeded one-second runs by default) over the declared search space of
the chosen solver, prints the winner, and writes the full trial log.

Example:
    python3 scripts/tune_params.py had12 --solver GA --trials 30 \
        --log results/had12_ga_trials.csv
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qubobench.instances import load_instance
from qubobench.tuner import da_space, ga_space, tune


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("instance", help="catalog instance name")
    ap.add_argument("--solver", choices=["GA", "DA"], default="GA")
    ap.add_argument("--trials", type=int, default=30)
    ap.add_argument("--inner-runs", type=int, default=20)
    ap.add_argument("--inner-limit", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log", type=Path, default=None, help="trial log CSV path")
    args = ap.parse_args(argv)

    desc, inst = load_instance(args.instance)
    space = ga_space(inst) if args.solver == "GA" else da_space()
    if args.log is not None:
        args.log.parent.mkdir(parents=True, exist_ok=True)
    res = tune(
        inst,
        space,
        trials=args.trials,
        inner_runs=args.inner_runs,
        inner_limit=args.inner_limit,
        seed=args.seed,
        log_path=args.log,
    )
    print(f"best score: {res.best_score:g}")
    for key, value in res.best_params.items():
        print(f"  {key} = {value}")
    if res.log_path:
        print(f"trial log: {res.log_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
