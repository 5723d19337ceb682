#!/usr/bin/env python3
"""Run the solver comparison grid on catalog instances and write reports.

Each (instance, solver, time-limit) cell runs `--reps` seeded trials; the
CSV/text reports include per-cell Welch significance against the other
solver. GA cells use the published tuned parameters when the catalog has
them (otherwise defaults); DA cells use the tuned annealer controls plus any
--da-* overrides given here.

Examples:
    python3 scripts/run_benchmark.py --instances had12 rou12 --limits 1 2
    python3 scripts/run_benchmark.py --instances weing1 --solvers DA \
        --limits 60 --reps 20 --out results/weing1
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qubobench.annealer import DaConfig
from qubobench.bench import emit_report, run_trials, summarize
from qubobench.genetic import GaConfig
from qubobench.instances import load_catalog
from qubobench.tuner import load_tuned_params


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--instances", nargs="+", required=True,
                    help="catalog instance names")
    ap.add_argument("--solvers", nargs="+", default=["DA", "GA"],
                    choices=["DA", "GA"])
    ap.add_argument("--limits", nargs="+", type=float, default=[1.0, 2.0, 5.0, 10.0],
                    help="wall-clock limits in seconds")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--master-seed", type=int, default=0)
    ap.add_argument("--alpha", type=float, default=None,
                    help="constraint weight override for DA one-hot encodings")
    ap.add_argument("--mkp-mode", choices=["inequality", "slack"],
                    default="inequality", help="DA knapsack handling")
    ap.add_argument("--stop-at-optimum", action="store_true",
                    help="end trials early when the catalog optimum is reached")
    ap.add_argument("--out", type=Path, default=Path("results/benchmark"),
                    help="output path stem (.csv and .txt are appended)")
    args = ap.parse_args(argv)

    catalog = load_catalog()
    for name in args.instances:
        if name not in catalog:
            ap.error(f"unknown instance {name!r}; known: {sorted(catalog)}")

    trial_sets = []
    for name in args.instances:
        for solver in args.solvers:
            if solver == "GA":
                try:
                    config = load_tuned_params(name, "GA")
                except KeyError:
                    config = GaConfig()
            else:
                config = load_tuned_params(name, "DA")
            for limit in args.limits:
                ts = run_trials(
                    name,
                    config,
                    time_limit=limit,
                    reps=args.reps,
                    master_seed=args.master_seed,
                    alpha=args.alpha,
                    mkp_mode=args.mkp_mode,
                    target=None if not args.stop_at_optimum else catalog[name].optimum,
                )
                mean, std = summarize(ts)
                print(
                    f"{name} {solver} {limit:g}s: mean={mean:.1f} std={std:.1f} "
                    f"best={ts.best:g} optimum={ts.optimum}",
                    flush=True,
                )
                trial_sets.append(ts)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = emit_report(trial_sets, args.out.with_suffix(".csv"), fmt="csv")
    txt_path = emit_report(trial_sets, args.out.with_suffix(".txt"), fmt="text")
    print(f"wrote {csv_path} and {txt_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
