"""Command-line entry point: encode, solve-da, solve-ga, bench, tune, verify.

Exit codes: 0 success, 1 infeasible verification, 2 usage error, 3 solver
found no feasible solution, 4 I/O or file-format error. All randomness flows
from --seed; when omitted, a seed is drawn and printed for replay. Knapsack
objectives are printed as positive profits; assignment and tour costs as-is.

Config files are flat key=value text (one pair per line, # comments allowed)
whose keys are solver config fields, e.g.::

    population_size = 23
    crossover_type = order
    eliminate_duplicates = true
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .annealer import DaConfig
from .bench import BenchError, emit_report, run_trials, solve_once, summarize
from .encoders import (
    EncodingError,
    mkp_encode_slack,
    mkp_objective,
    qap_encode,
    qap_objective,
    tsp_encode,
    tsp_objective,
)
from .genetic import GaConfig
from .instances import (
    MkpInstance,
    ParseError,
    QapInstance,
    TspInstance,
    load_catalog,
    load_instance,
    parse_orlib_mknap,
    parse_qaplib,
    parse_tsplib,
)
from .qubo import write_qubo_file
from .tuner import da_space, ga_space, load_tuned_params, tune

__all__ = ["main"]

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2
EXIT_NO_FEASIBLE = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


class IoError(Exception):
    pass


def _coerce(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _read_config_file(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read config file: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = _coerce(value)
    return out


def _build_config(cls, overrides: dict):
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - valid
    if unknown:
        raise UsageError(
            f"unknown {cls.__name__} fields: {sorted(unknown)}; valid: {sorted(valid)}"
        )
    try:
        return cls(**overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _load_problem(name_or_path: str, family: str | None):
    """Catalog name, or a file path with --family naming its format."""
    path = Path(name_or_path)
    if path.exists():
        if family is None:
            raise UsageError("--family is required when loading from a file")
        try:
            text = path.read_text()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        try:
            if family == "tsp":
                return None, parse_tsplib(text)
            if family == "qap":
                return None, parse_qaplib(text)
            insts = parse_orlib_mknap(text)
        except ParseError as exc:
            raise IoError(f"{path}: {exc}") from exc
        if not insts:
            raise IoError(f"{path}: no knapsack instances found")
        return None, insts[0]
    try:
        return load_instance(name_or_path)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc


def _family_of(inst) -> str:
    if isinstance(inst, MkpInstance):
        return "mkp"
    if isinstance(inst, QapInstance):
        return "qap"
    return "tsp"


def _resolve_seed(seed: int | None) -> int:
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
        print(f"seed: {seed} (drawn; pass --seed {seed} to replay)")
    return seed


# ---------------------------------------------------------------------------
# subcommands


def _cmd_encode(args) -> int:
    _, inst = _load_problem(args.instance, args.family)
    family = _family_of(inst)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc

    stem = Path(args.instance).stem
    meta: dict = {"instance": args.instance, "family": family}
    if family == "mkp" and args.mode == "inequality":
        # no constraint QUBO in this mode: the capacities stay explicit
        cost = {(j, j): -float(p) for j, p in enumerate(inst.profits)}
        from .qubo import QuboMatrix

        C = QuboMatrix(size=inst.n, entries=cost)
        write_qubo_file(C, out_dir / f"{stem}_cost.qubo")
        meta.update(
            mode="inequality",
            size=C.size,
            weights=inst.weights.tolist(),
            capacities=inst.capacities.tolist(),
        )
    else:
        if family == "mkp":
            ep = mkp_encode_slack(inst)
            meta["mode"] = "slack"
        elif family == "qap":
            ep = qap_encode(inst)
        else:
            ep = tsp_encode(inst)
        write_qubo_file(ep.cost, out_dir / f"{stem}_cost.qubo")
        write_qubo_file(ep.constraint, out_dir / f"{stem}_constraint.qubo")
        meta.update(size=ep.cost.size, alpha=ep.alpha, decoder=ep.decoder.describe())
    (out_dir / f"{stem}_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"encoded {args.instance}: size {meta['size']} -> {out_dir}")
    return EXIT_OK


def _cmd_solve(args, solver: str) -> int:
    desc, inst = _load_problem(args.instance, args.family)
    overrides = _read_config_file(args.config) if args.config else {}
    seed = _resolve_seed(args.seed)
    if solver == "GA":
        if "crossover_type" not in overrides and _family_of(inst) != "mkp":
            overrides["crossover_type"] = "order"
        config = _build_config(GaConfig, overrides)
        if args.budget is not None:
            config = dataclasses.replace(config, max_generations=args.budget)
    else:
        config = _build_config(DaConfig, overrides)
        if args.budget is not None:
            config = dataclasses.replace(config, max_iterations=args.budget)
    try:
        objective, feasible, time_to_best, elapsed = solve_once(
            inst,
            config,
            time_limit=args.time,
            seed=seed,
            alpha=args.alpha,
            mkp_mode=args.mode,
        )
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    record = {
        "instance": args.instance,
        "solver": solver,
        "seed": seed,
        "time_limit_s": args.time,
        "objective": objective if feasible else None,
        "feasible": feasible,
        "time_to_best_s": round(time_to_best, 6),
        "elapsed_s": round(elapsed, 6),
    }
    if not feasible:
        print(f"{args.instance}: no feasible solution within {args.time:g}s")
        if args.json:
            print(json.dumps(record))
        return EXIT_NO_FEASIBLE
    print(
        f"{args.instance}: objective {objective:g}, feasible, "
        f"time to best {time_to_best:.3f}s"
    )
    if args.json:
        print(json.dumps(record))
    return EXIT_OK


def _cmd_bench(args) -> int:
    catalog = load_catalog()
    for name in args.instances:
        if name not in catalog:
            raise UsageError(f"unknown instance {name!r}; known: {sorted(catalog)}")
    seed = _resolve_seed(args.seed)
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
            for limit in args.time:
                ts = run_trials(
                    name,
                    config,
                    time_limit=limit,
                    reps=args.reps,
                    master_seed=seed,
                    alpha=args.alpha,
                    mkp_mode=args.mode,
                )
                mean, std = summarize(ts)
                print(f"{name} {solver} {limit:g}s: mean={mean:.2f} stddev={std:.2f}")
                trial_sets.append(ts)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        suffix = "csv" if args.format == "csv" else "txt"
        path = emit_report(trial_sets, out_dir / f"benchmark.{suffix}", fmt=args.format)
    except OSError as exc:
        raise IoError(f"cannot write report: {exc}") from exc
    print(f"report: {path}")
    return EXIT_OK


def _cmd_tune(args) -> int:
    desc, inst = _load_problem(args.instance, args.family)
    seed = _resolve_seed(args.seed)
    space = ga_space(inst) if args.solver == "GA" else da_space()
    log_path = None
    if args.out:
        out_dir = Path(args.out)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoError(f"cannot create {out_dir}: {exc}") from exc
        log_path = out_dir / f"{Path(args.instance).stem}_{args.solver.lower()}_trials.csv"
    res = tune(
        inst,
        space,
        trials=args.trials,
        inner_runs=args.inner_runs,
        inner_limit=args.time,
        seed=seed,
        log_path=log_path,
        alpha=args.alpha,
        mkp_mode=args.mode,
    )
    print(f"best score: {res.best_score:g}")
    for key, value in res.best_params.items():
        print(f"{key} = {value}")
    if res.log_path:
        print(f"trial log: {res.log_path}")
    return EXIT_OK


def _read_solution_file(path: Path) -> list[int]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read solution file: {exc}") from exc
    tokens = text.replace(",", " ").split()
    try:
        return [int(t) for t in tokens]
    except ValueError as exc:
        raise IoError(f"{path}: solution files contain integers only ({exc})") from exc


def _cmd_verify(args) -> int:
    _, inst = _load_problem(args.instance, args.family)
    values = _read_solution_file(Path(args.solution))
    family = _family_of(inst)

    if family == "mkp":
        if len(values) != inst.n or any(v not in (0, 1) for v in values):
            print(f"infeasible: expected {inst.n} 0/1 item flags")
            return EXIT_INFEASIBLE
        x = np.array(values, dtype=np.int64)
        loads = x @ inst.weights
        for k, (load, cap) in enumerate(zip(loads, inst.capacities)):
            if load > cap:
                print(f"infeasible: capacity {k} exceeded (load {load} > {cap})")
                return EXIT_INFEASIBLE
        print(f"feasible, objective {-mkp_objective(inst, x)}")
        return EXIT_OK

    n = inst.n if family == "qap" else inst.n_cities
    arr = np.array(values, dtype=np.int64)
    if len(arr) != n or not np.array_equal(np.sort(arr), np.arange(1, n + 1)):
        print(f"infeasible: not a permutation of 1..{n}")
        return EXIT_INFEASIBLE
    objective = qap_objective(inst, arr) if family == "qap" else tsp_objective(inst, arr)
    print(f"feasible, objective {objective}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(sp, *, family=True, mode=True, seed=True, alpha=False):
    if family:
        sp.add_argument("--family", choices=["mkp", "qap", "tsp"], default=None,
                        help="instance file format (required for file paths)")
    if mode:
        sp.add_argument("--mode", choices=["slack", "inequality"],
                        default="inequality", help="knapsack constraint handling")
    if seed:
        sp.add_argument("--seed", type=int, default=None)
    if alpha:
        sp.add_argument("--alpha", type=float, default=None,
                        help="constraint weight override for one-hot encodings")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qubobench",
        description="QUBO encodings, annealing and genetic solvers, benchmarks.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="write cost/constraint QUBO files")
    enc.add_argument("instance", help="catalog name or instance file path")
    enc.add_argument("--out", default="encoded", help="output directory")
    _add_common(enc, seed=False)
    enc.set_defaults(func=_cmd_encode)

    for name, solver in (("solve-da", "DA"), ("solve-ga", "GA")):
        sp = sub.add_parser(name, help=f"run the {solver} solver once")
        sp.add_argument("instance")
        sp.add_argument("--config", type=Path, default=None,
                        help="key=value solver configuration file")
        sp.add_argument("--time", type=float, default=1.0,
                        help="wall-clock limit in seconds")
        sp.add_argument("--budget", type=int, default=None,
                        help="iteration/generation cap (makes runs machine-independent)")
        sp.add_argument("--json", action="store_true",
                        help="also print a JSON result record")
        _add_common(sp, alpha=True)
        sp.set_defaults(func=lambda a, s=solver: _cmd_solve(a, s))

    be = sub.add_parser("bench", help="run the benchmark grid and write a report")
    be.add_argument("instances", nargs="+", help="catalog instance names")
    be.add_argument("--solvers", nargs="+", default=["DA", "GA"], choices=["DA", "GA"])
    be.add_argument("--time", nargs="+", type=float, default=[1.0, 2.0, 5.0, 10.0],
                    help="wall-clock limits in seconds")
    be.add_argument("--reps", type=int, default=20)
    be.add_argument("--out", default="results")
    be.add_argument("--format", choices=["csv", "text"], default="csv")
    _add_common(be, family=False, alpha=True)
    be.set_defaults(func=_cmd_bench)

    tu = sub.add_parser("tune", help="random-search parameter tuning")
    tu.add_argument("instance")
    tu.add_argument("--solver", choices=["GA", "DA"], default="GA")
    tu.add_argument("--trials", type=int, default=30)
    tu.add_argument("--inner-runs", type=int, default=20)
    tu.add_argument("--time", type=float, default=1.0, help="inner run limit (s)")
    tu.add_argument("--out", default=None, help="directory for the trial log CSV")
    _add_common(tu, alpha=True)
    tu.set_defaults(func=_cmd_tune)

    ve = sub.add_parser("verify", help="check a solution file against an instance")
    ve.add_argument("instance")
    ve.add_argument("solution", help="file with a permutation or 0/1 selection")
    _add_common(ve, mode=False, seed=False)
    ve.set_defaults(func=_cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_FEASIBLE
    except (ParseError, EncodingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
