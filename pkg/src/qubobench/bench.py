"""Seeded, time-limited solver trials with Welch-t comparisons and reports.

A TrialSet holds the per-trial best objectives of one solver on one instance
at one time limit, in natural units (knapsack profits are reported positive,
i.e. negated from the internal minimisation form; assignment and tour costs
are reported as-is). Every recorded objective comes from a feasible solution;
a trial that ends without one raises BenchError with its trial index.

Reports are written as a long-form CSV (one row per TrialSet, with the Welch
t-test against the other solver on the same instance and limit when present)
and as an aligned text table with one row per instance, a column per
solver/limit pair, a marker for reaching the optimum and an asterisk for
statistical significance.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .annealer import DaConfig, anneal, anneal_with_inequalities
from .encoders import (
    mkp_encode_slack,
    mkp_objective,
    qap_encode,
    qap_objective,
    tsp_encode,
    tsp_objective,
)
from .genetic import GaConfig, evolve
from .instances import MkpInstance, QapInstance, TspInstance, load_instance
from .qubo import QuboMatrix, aggregate

__all__ = [
    "BenchError",
    "TrialSet",
    "Comparison",
    "solve_once",
    "run_trials",
    "summarize",
    "t_test",
    "emit_report",
]


class BenchError(RuntimeError):
    """A trial failed or produced no feasible solution."""


@dataclass
class TrialSet:
    """Results of `reps` independent seeded runs of one solver on one
    instance at one wall-clock limit (the experimental grid uses 1, 2, 5 and
    10 seconds; any positive limit is accepted)."""

    instance: str
    family: str  # MKP | QAP | TSP
    solver: str  # DA | GA
    time_limit: float
    reps: int
    objectives: list[float] = field(default_factory=list)
    feasible: list[bool] = field(default_factory=list)
    time_to_best: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    optimum: float | None = None

    @property
    def maximizing(self) -> bool:
        return self.family == "MKP"

    @property
    def best(self) -> float:
        vals = self.objectives
        return float(max(vals) if self.maximizing else min(vals))

    @property
    def reached_optimum(self) -> bool | None:
        if self.optimum is None:
            return None
        return abs(self.best - self.optimum) <= 1e-9


@dataclass
class Comparison:
    """Two-sided Welch t-test between two objective samples; swapping sides
    negates t and preserves p. `degenerate` marks the both-sides-constant
    special cases (equal means: t=0, p=1; different: infinite t, p=0)."""

    mean_a: float
    stddev_a: float
    mean_b: float
    stddev_b: float
    t_stat: float
    p_value: float
    significant: bool
    degenerate: bool = False


def _family(inst) -> str:
    if isinstance(inst, MkpInstance):
        return "MKP"
    if isinstance(inst, QapInstance):
        return "QAP"
    if isinstance(inst, TspInstance):
        return "TSP"
    raise TypeError(f"unsupported instance type {type(inst).__name__}")


def _mkp_cost(inst: MkpInstance) -> QuboMatrix:
    entries = {(j, j): -float(p) for j, p in enumerate(inst.profits)}
    return QuboMatrix(size=inst.n, entries=entries)


def solve_once(
    inst,
    config,
    time_limit: float,
    seed: int,
    *,
    alpha: float | None = None,
    mkp_mode: str = "inequality",
    target: float | None = None,
):
    """Run one seeded, time-limited solve and return
    (objective in natural units, feasible, time_to_best, elapsed_seconds).

    DA runs on the QUBO form: one-hot encodings for QAP/TSP (with an optional
    constraint-weight override `alpha`) and, for MKP, either the native
    capacity-respecting mode ("inequality") or the slack-bit QUBO ("slack").
    GA runs on the natural representation. `target` is the known optimum in
    natural units; reaching it stops the run early.
    """
    family = _family(inst)
    maximizing = family == "MKP"
    internal_target = None if target is None else (-target if maximizing else target)

    t0 = time.perf_counter()
    if isinstance(config, DaConfig):
        cfg = replace(
            config,
            time_limit=time_limit,
            seed=seed,
            target_energy=internal_target
            if internal_target is not None
            else config.target_energy,
        )
        if family == "MKP":
            if mkp_mode == "inequality":
                res = anneal_with_inequalities(_mkp_cost(inst), inst, cfg)
                decoded = res.best_state[: inst.n]
            elif mkp_mode == "slack":
                ep = mkp_encode_slack(inst)
                Q = aggregate(ep.cost, ep.constraint, ep.alpha if alpha is None else alpha)
                res = anneal(Q, cfg, constraint=ep.constraint, decoder=ep.decoder)
                decoded = res.decoded
            else:
                raise ValueError(f"unknown mkp_mode {mkp_mode!r}")
        else:
            ep = qap_encode(inst) if family == "QAP" else tsp_encode(inst)
            Q = aggregate(ep.cost, ep.constraint, ep.alpha if alpha is None else alpha)
            res = anneal(Q, cfg, constraint=ep.constraint, decoder=ep.decoder)
            decoded = res.decoded
    elif isinstance(config, GaConfig):
        cfg = replace(
            config,
            time_limit=time_limit,
            seed=seed,
            target_fitness=internal_target
            if internal_target is not None
            else config.target_fitness,
        )
        res = evolve(inst, cfg)
        decoded = res.decoded
    else:
        raise TypeError(f"unsupported solver config {type(config).__name__}")
    elapsed = time.perf_counter() - t0

    if not res.feasible or decoded is None:
        return math.nan, False, res.time_to_best, elapsed
    if family == "MKP":
        objective = float(-mkp_objective(inst, decoded))
    elif family == "QAP":
        objective = float(qap_objective(inst, decoded))
    else:
        objective = float(tsp_objective(inst, decoded))
    return objective, True, res.time_to_best, elapsed


def run_trials(
    instance,
    config,
    time_limit: float,
    reps: int = 20,
    master_seed: int = 0,
    *,
    alpha: float | None = None,
    mkp_mode: str = "inequality",
    target: float | None = None,
    optimum: float | None = None,
) -> TrialSet:
    """Run `reps` independent seeded trials (seeds spawned from master_seed)
    and collect the per-trial best objectives. `instance` is a catalog name
    or an instance object. A trial without a feasible result raises
    BenchError naming the trial index."""
    if isinstance(instance, str):
        desc, inst = load_instance(instance)
        name = instance
        if optimum is None and desc.optimum is not None:
            optimum = float(desc.optimum)
    else:
        inst, name = instance, type(instance).__name__
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if time_limit <= 0:
        raise ValueError("time_limit must be positive")

    solver = "DA" if isinstance(config, DaConfig) else "GA"
    ts = TrialSet(
        instance=name,
        family=_family(inst),
        solver=solver,
        time_limit=float(time_limit),
        reps=reps,
        optimum=optimum,
    )
    if target is None and optimum is not None:
        target = optimum
    children = np.random.SeedSequence(master_seed).spawn(reps)
    for k in range(reps):
        seed = int(children[k].generate_state(1)[0])
        try:
            obj, feas, ttb, elapsed = solve_once(
                inst, config, time_limit, seed,
                alpha=alpha, mkp_mode=mkp_mode, target=target,
            )
        except Exception as exc:
            raise BenchError(f"trial {k} failed: {exc}") from exc
        if not feas:
            raise BenchError(f"trial {k} found no feasible solution")
        ts.objectives.append(obj)
        ts.feasible.append(True)
        ts.time_to_best.append(ttb)
        ts.elapsed.append(elapsed)
    return ts


def summarize(ts: TrialSet | list[float]) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1 denominator;
    a single sample reports stddev 0 by convention)."""
    vals = ts.objectives if isinstance(ts, TrialSet) else list(ts)
    if not vals:
        raise ValueError("empty trial set")
    arr = np.asarray(vals, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def t_test(a, b) -> Comparison:
    """Two-sided Welch (unequal-variance) t-test, significant at p < 0.05."""
    a = np.asarray(a.objectives if isinstance(a, TrialSet) else a, dtype=np.float64)
    b = np.asarray(b.objectives if isinstance(b, TrialSet) else b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each side needs at least 2 samples")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    sd_a = float(a.std(ddof=1))
    sd_b = float(b.std(ddof=1))
    if sd_a == 0.0 and sd_b == 0.0:
        if mean_a == mean_b:
            t, p, degenerate = 0.0, 1.0, True
        else:
            t = math.inf if mean_a > mean_b else -math.inf
            p, degenerate = 0.0, True
    else:
        with warnings.catch_warnings():
            # one constant side is handled fine; scipy still warns about it
            warnings.simplefilter("ignore", RuntimeWarning)
            out = stats.ttest_ind(a, b, equal_var=False)
        t, p, degenerate = float(out.statistic), float(out.pvalue), False
    return Comparison(
        mean_a=mean_a,
        stddev_a=sd_a,
        mean_b=mean_b,
        stddev_b=sd_b,
        t_stat=t,
        p_value=p,
        significant=bool(p < 0.05),
        degenerate=degenerate,
    )


_CSV_HEADER = (
    "instance,family,solver,time_limit_s,reps,mean,stddev,best,optimum,"
    "reached_optimum,t_stat,p_value,significant"
)


def _pairings(trial_sets):
    """Comparison per TrialSet against the other solver on the same
    (instance, time_limit) cell, when exactly one counterpart exists."""
    out = {}
    for k, ts in enumerate(trial_sets):
        partners = [
            other
            for other in trial_sets
            if other is not ts
            and other.instance == ts.instance
            and other.time_limit == ts.time_limit
            and other.solver != ts.solver
        ]
        if len(partners) == 1:
            out[k] = t_test(ts, partners[0])
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.6g}"
    return str(x)


def emit_report(trial_sets: list[TrialSet], path, fmt: str = "csv") -> Path:
    """Write the trial grid to `path` as long-form CSV or as an aligned text
    table (one row per instance; per solver/limit cell "mean (stddev)", with
    "^" when the cell's best reached the optimum and "*" when the Welch test
    against the other solver is significant at 0.05)."""
    path = Path(path)
    if fmt == "csv":
        pairs = _pairings(trial_sets)
        lines = [_CSV_HEADER]
        for k, ts in enumerate(trial_sets):
            mean, std = summarize(ts)
            cmp = pairs.get(k)
            lines.append(
                ",".join(
                    [
                        ts.instance,
                        ts.family,
                        ts.solver,
                        _fmt(ts.time_limit),
                        str(ts.reps),
                        _fmt(mean),
                        _fmt(std),
                        _fmt(ts.best),
                        _fmt(ts.optimum),
                        _fmt(ts.reached_optimum),
                        _fmt(cmp.t_stat if cmp else None),
                        _fmt(cmp.p_value if cmp else None),
                        _fmt(cmp.significant if cmp else None),
                    ]
                )
            )
        path.write_text("\n".join(lines) + "\n")
        return path
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")

    pairs = _pairings(trial_sets)
    instances = list(dict.fromkeys(ts.instance for ts in trial_sets))
    cells = sorted(
        dict.fromkeys((ts.solver, ts.time_limit) for ts in trial_sets),
        key=lambda c: (c[0], c[1]),
    )
    header = ["instance", "optimum"] + [f"{s}@{_fmt(lim)}s" for s, lim in cells]
    rows = [header]
    for name in instances:
        opt = next(
            (ts.optimum for ts in trial_sets if ts.instance == name and ts.optimum is not None),
            None,
        )
        row = [name, _fmt(opt)]
        for solver, lim in cells:
            entry = ""
            for k, ts in enumerate(trial_sets):
                if ts.instance == name and ts.solver == solver and ts.time_limit == lim:
                    mean, std = summarize(ts)
                    entry = f"{_fmt(mean)} ({_fmt(std)})"
                    if ts.reached_optimum:
                        entry += "^"
                    cmp = pairs.get(k)
                    if cmp and cmp.significant:
                        entry += "*"
                    break
            row.append(entry)
        rows.append(row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    body = "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in rows
    )
    footer = (
        "\n\n^ best trial reached the optimum."
        "\n* significant at 0.05 (two-sided Welch unequal-variance t-test"
        " against the other solver at the same limit)."
    )
    path.write_text(body + footer + "\n")
    return path
