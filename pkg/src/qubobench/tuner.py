"""Uniform random-search hyperparameter tuning.

Protocol: a fixed number of sampled configurations (default 30), each scored
by the mean best objective of `inner_runs` seeded runs at `inner_limit`
seconds (default 20 runs x 1 s). The best configuration by score wins, ties
going to the earliest trial. Sampling is uniform and fully seeded; the trial
log is written as CSV so a smarter sampler could be swapped in on top of the
same record format.

`load_tuned_params` returns the published per-instance tuned configurations
from the instance catalog ("default" annealer rows map to this package's
documented defaults).
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annealer import DaConfig
from .bench import run_trials
from .genetic import GaConfig
from .instances import (
    MkpInstance,
    QapInstance,
    TspInstance,
    load_catalog,
    load_instance,
)

__all__ = [
    "Param",
    "ParamSpace",
    "TrialRecord",
    "TuneResult",
    "ga_space",
    "da_space",
    "tune",
    "load_tuned_params",
]


@dataclass(frozen=True)
class Param:
    """One searchable parameter: an inclusive integer range, a real range,
    or an explicit list of choices."""

    name: str
    kind: str  # "int" | "float" | "categorical"
    low: float | None = None
    high: float | None = None
    choices: tuple | None = None

    def __post_init__(self):
        if self.kind in ("int", "float"):
            if self.low is None or self.high is None or self.low > self.high:
                raise ValueError(f"{self.name}: invalid bounds [{self.low}, {self.high}]")
        elif self.kind == "categorical":
            if not self.choices:
                raise ValueError(f"{self.name}: empty choice list")
        else:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    def sample(self, rng: np.random.Generator):
        if self.kind == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.kind == "float":
            return float(rng.uniform(self.low, self.high))
        return self.choices[int(rng.integers(len(self.choices)))]


@dataclass(frozen=True)
class ParamSpace:
    """Search space for one solver ("GA" or "DA")."""

    solver: str
    params: tuple[Param, ...]

    def __post_init__(self):
        if self.solver not in ("GA", "DA"):
            raise ValueError("solver must be GA or DA")
        if not self.params:
            raise ValueError("empty parameter space")

    def sample(self, rng: np.random.Generator) -> dict:
        return {p.name: p.sample(rng) for p in self.params}

    def names(self) -> list[str]:
        return [p.name for p in self.params]


def _genome_length(inst) -> int:
    if isinstance(inst, MkpInstance):
        return inst.n
    if isinstance(inst, QapInstance):
        return inst.n
    if isinstance(inst, TspInstance):
        return inst.n_cities
    raise TypeError(f"unsupported instance type {type(inst).__name__}")


def ga_space(inst) -> ParamSpace:
    """GA search space: population in [n, 10n], crossover choices matching
    the genome kind, duplicate elimination on/off, crossover rate in
    [0.5, 0.9], mutation rate in [0, 0.2]."""
    n = _genome_length(inst)
    binary = isinstance(inst, MkpInstance)
    crossovers = (
        ("one_point", "two_point", "uniform", "exponential")
        if binary
        else ("order", "edge_recombination")
    )
    return ParamSpace(
        solver="GA",
        params=(
            Param("population_size", "int", low=n, high=10 * n),
            Param("crossover_type", "categorical", choices=crossovers),
            Param("eliminate_duplicates", "categorical", choices=(True, False)),
            Param("crossover_rate", "float", low=0.5, high=0.9),
            Param("mutation_rate", "float", low=0.0, high=0.2),
        ),
    )


def da_space() -> ParamSpace:
    """Annealer search space over the documented public controls."""
    return ParamSpace(
        solver="DA",
        params=(
            Param("restart_interval_scale", "int", low=0, high=100),
            Param("no_improvement_cutoff", "int", low=0, high=1_000_000),
            Param("num_run", "int", low=1, high=16),
            Param("num_group", "int", low=1, high=16),
        ),
    )


@dataclass
class TrialRecord:
    index: int
    params: dict
    score: float
    elapsed: float
    error: str | None = None
    rank: int | None = None


@dataclass
class TuneResult:
    best_params: dict
    best_config: object
    best_score: float
    records: list[TrialRecord] = field(default_factory=list)
    log_path: Path | None = None


def make_config(space: ParamSpace, params: dict):
    """Build the solver config a sampled point describes."""
    if space.solver == "GA":
        return GaConfig(**params)
    return DaConfig(**params)


def _apply_inner_budget(config, inner_budget):
    if inner_budget is None:
        return config
    if isinstance(config, GaConfig):
        return replace(config, max_generations=int(inner_budget))
    return replace(config, max_iterations=int(inner_budget))


def tune(
    instance,
    space: ParamSpace,
    trials: int = 30,
    inner_runs: int = 20,
    inner_limit: float = 1.0,
    seed: int = 0,
    inner_budget: int | None = None,
    log_path=None,
    **run_kwargs,
) -> TuneResult:
    """Sample `trials` configurations uniformly and score each by the mean
    best objective over `inner_runs` seeded runs of `inner_limit` seconds.

    A trial whose solver raises is recorded with the error and scored as
    worst. `inner_budget` caps iterations (DA) / generations (GA) instead of
    wall-clock, making scores machine-independent (seeded end to end either
    way). Extra keyword arguments are passed to run_trials (e.g. alpha,
    mkp_mode)."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if isinstance(instance, str):
        _, inst = load_instance(instance)
    else:
        inst = instance
    maximizing = isinstance(inst, MkpInstance)
    worst = -math.inf if maximizing else math.inf

    rng = np.random.default_rng(seed)
    records: list[TrialRecord] = []
    for k in range(trials):
        params = space.sample(rng)
        master_seed = int(rng.integers(2**63))
        config = _apply_inner_budget(make_config(space, params), inner_budget)
        t0 = time.perf_counter()
        try:
            ts = run_trials(
                inst,
                config,
                time_limit=inner_limit,
                reps=inner_runs,
                master_seed=master_seed,
                **run_kwargs,
            )
            score = float(np.mean(ts.objectives))
            error = None
        except Exception as exc:  # scored as worst, recorded, tuning continues
            score, error = worst, f"{type(exc).__name__}: {exc}"
        records.append(
            TrialRecord(
                index=k,
                params=params,
                score=score,
                elapsed=time.perf_counter() - t0,
                error=error,
            )
        )

    def sort_key(rec: TrialRecord):
        return (-rec.score if maximizing else rec.score, rec.index)

    for rank, rec in enumerate(sorted(records, key=sort_key), start=1):
        rec.rank = rank
    best = min(records, key=sort_key)

    path = None
    if log_path is not None:
        path = Path(log_path)
        names = space.names()
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial_index", *names, "score", "elapsed", "error"])
            for rec in records:
                writer.writerow(
                    [rec.index]
                    + [rec.params.get(n, "") for n in names]
                    + [rec.score, f"{rec.elapsed:.6f}", rec.error or ""]
                )

    return TuneResult(
        best_params=dict(best.params),
        best_config=make_config(space, best.params),
        best_score=best.score,
        records=records,
        log_path=path,
    )


def load_tuned_params(name: str, solver: str):
    """Published tuned configuration for a catalog instance.

    solver="GA" returns the instance's tuned GaConfig; solver="DA" returns
    the tuned DaConfig, with "default" catalog rows mapping to DaConfig()."""
    catalog = load_catalog()
    if name not in catalog:
        raise KeyError(f"unknown instance {name!r}; known: {sorted(catalog)}")
    desc = catalog[name]
    if solver.upper() == "GA":
        if not desc.ga_params:
            raise KeyError(f"{name}: no tuned GA parameters on record")
        return GaConfig(**desc.ga_params)
    if solver.upper() == "DA":
        return DaConfig(**desc.da_params)
    raise ValueError("solver must be GA or DA")
