"""Generational genetic algorithm over natural representations.

Binary genomes cover knapsack selection vectors; permutation genomes cover
assignment and tour problems. Parents are drawn uniformly at random, offspring
are produced by the configured crossover (applied with a given probability,
otherwise cloning) followed by mutation, and survivors are the best
``population_size`` individuals of the merged parent+offspring pool, so the
population never loses its incumbent while the offspring stream supplies
variation. Optional duplicate elimination keeps the population genome-distinct.

Infeasible knapsack genomes are allowed to exist in the population but carry a
penalty large enough that any feasible genome beats every infeasible one; the
reported result is always feasible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .annealer import RunResult
from .encoders import mkp_objective, qap_objective, tsp_objective
from .instances import MkpInstance, QapInstance, TspInstance

__all__ = [
    "GaConfig",
    "evolve",
    "crossover_one_point",
    "crossover_two_point",
    "crossover_uniform",
    "crossover_exponential",
    "crossover_order",
    "crossover_edge_recombination",
    "mutate_bitflip",
    "mutate_inverse",
    "eliminate_duplicates",
]

_BINARY_CROSSOVERS = ("one_point", "two_point", "uniform", "exponential")
_PERMUTATION_CROSSOVERS = ("order", "edge_recombination")


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 20
    selection_type: str = "random"
    crossover_type: str = "uniform"
    crossover_rate: float = 0.7
    mutation_type: str | None = None  # bit_flip / inverse; default by genome kind
    mutation_rate: float = 0.05
    eliminate_duplicates: bool = True
    time_limit: float = 1.0
    seed: int | None = None
    max_generations: int | None = None
    target_fitness: float | None = None

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.selection_type != "random":
            raise ValueError("only random parent selection is supported")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.max_generations is not None and self.max_generations < 1:
            raise ValueError("max_generations must be positive when set")


# ---------------------------------------------------------------------------
# Binary crossovers (pure functions; evolve draws their random parameters)


def crossover_one_point(a: np.ndarray, b: np.ndarray, cut: int):
    if a.shape != b.shape:
        raise ValueError("parent length mismatch")
    if not 0 <= cut <= len(a):
        raise ValueError("cut out of range")
    c1 = np.concatenate([a[:cut], b[cut:]])
    c2 = np.concatenate([b[:cut], a[cut:]])
    return c1, c2


def crossover_two_point(a: np.ndarray, b: np.ndarray, cut1: int, cut2: int):
    if a.shape != b.shape:
        raise ValueError("parent length mismatch")
    if not 0 <= cut1 <= cut2 <= len(a):
        raise ValueError("cuts out of range")
    c1, c2 = a.copy(), b.copy()
    c1[cut1:cut2] = b[cut1:cut2]
    c2[cut1:cut2] = a[cut1:cut2]
    return c1, c2


def crossover_uniform(a: np.ndarray, b: np.ndarray, mask: np.ndarray):
    if a.shape != b.shape or mask.shape != a.shape:
        raise ValueError("parent/mask length mismatch")
    return np.where(mask, a, b), np.where(mask, b, a)


def crossover_exponential(a: np.ndarray, b: np.ndarray, start: int, length: int):
    """Copy a contiguous (wrapping) run of `length` genes starting at `start`
    from the other parent, as in differential-evolution exponential crossover."""
    n = len(a)
    if a.shape != b.shape:
        raise ValueError("parent length mismatch")
    if not 0 <= start < n or length < 0:
        raise ValueError("run out of range")
    idx = (start + np.arange(min(length, n))) % n
    c1, c2 = a.copy(), b.copy()
    c1[idx] = b[idx]
    c2[idx] = a[idx]
    return c1, c2


# ---------------------------------------------------------------------------
# Permutation crossovers


def crossover_order(p1: np.ndarray, p2: np.ndarray, cut1: int, cut2: int) -> np.ndarray:
    """Keep p1[cut1:cut2) in place; fill the remaining positions left to right
    with p2's values in p2 order, skipping values already present."""
    n = len(p1)
    if p1.shape != p2.shape:
        raise ValueError("parent length mismatch")
    if not 0 <= cut1 < cut2 <= n:
        raise ValueError("invalid cuts")
    child = np.empty(n, dtype=p1.dtype)
    child[cut1:cut2] = p1[cut1:cut2]
    present = set(int(v) for v in p1[cut1:cut2])
    fill = (int(v) for v in p2 if int(v) not in present)
    for pos in range(n):
        if cut1 <= pos < cut2:
            continue
        child[pos] = next(fill)
    return child


def crossover_edge_recombination(
    p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator, trace: list | None = None
) -> np.ndarray:
    """Whitley edge recombination: walk the union adjacency graph of both
    parent cycles, preferring the unvisited neighbour with the smallest
    remaining adjacency set (uniform tie-break), falling back to a uniform
    unvisited value when the current set is empty. When `trace` is given, one
    bool per step is appended recording whether a parental edge was used."""
    n = len(p1)
    if p1.shape != p2.shape:
        raise ValueError("parent length mismatch")
    adj: dict[int, set[int]] = {int(v): set() for v in p1}
    for parent in (p1, p2):
        for k in range(n):
            v = int(parent[k])
            adj[v].add(int(parent[(k + 1) % n]))
            adj[v].add(int(parent[(k - 1) % n]))
    current = int(p1[0]) if rng.random() < 0.5 else int(p2[0])
    child = [current]
    unvisited = set(adj.keys())
    unvisited.remove(current)
    while unvisited:
        for s in adj.values():
            s.discard(current)
        candidates = adj[current]
        if candidates:
            smallest = min(len(adj[v]) for v in candidates)
            pool = sorted(v for v in candidates if len(adj[v]) == smallest)
            nxt = pool[int(rng.integers(len(pool)))]
            if trace is not None:
                trace.append(True)
        else:
            pool = sorted(unvisited)
            nxt = pool[int(rng.integers(len(pool)))]
            if trace is not None:
                trace.append(False)
        child.append(nxt)
        unvisited.remove(nxt)
        current = nxt
    return np.array(child, dtype=p1.dtype)


# ---------------------------------------------------------------------------
# Mutations


def mutate_bitflip(x: np.ndarray, b: float, rng: np.random.Generator) -> np.ndarray:
    flips = rng.random(len(x)) < b
    out = x.copy()
    out[flips] = 1 - out[flips]
    return out


def mutate_inverse(perm: np.ndarray, b: float, rng: np.random.Generator) -> np.ndarray:
    out = perm.copy()
    if rng.random() < b:
        i, j = sorted(int(v) for v in rng.integers(0, len(perm), size=2))
        out[i : j + 1] = out[i : j + 1][::-1]
    return out


# ---------------------------------------------------------------------------
# Population utilities


def _genome_key(g: np.ndarray) -> bytes:
    return g.tobytes()


def eliminate_duplicates(
    pop: list[np.ndarray],
    genome_factory,
    rng: np.random.Generator,
    max_retries: int = 1000,
) -> list[np.ndarray]:
    """Return a population of the same size with genome-distinct members,
    refilling collisions with freshly generated genomes (bounded retries,
    duplicates tolerated only if retries run out)."""
    target = len(pop)
    seen = set()
    out = []
    for g in pop:
        k = _genome_key(g)
        if k not in seen:
            seen.add(k)
            out.append(g)
    retries = 0
    while len(out) < target and retries < max_retries:
        g = genome_factory(rng)
        k = _genome_key(g)
        retries += 1
        if k not in seen:
            seen.add(k)
            out.append(g)
    while len(out) < target:
        out.append(genome_factory(rng))
    return out


# ---------------------------------------------------------------------------
# Problem adapters


class _Problem:
    kind: str

    def random_genome(self, rng):
        raise NotImplementedError

    def fitness_batch(self, genomes: list[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def is_feasible(self, genome: np.ndarray) -> bool:
        return True

    def decode(self, genome: np.ndarray):
        return genome


class _MkpProblem(_Problem):
    kind = "binary"

    def __init__(self, inst: MkpInstance):
        self.inst = inst
        self.big = 1.0 + float(inst.profits.sum())

    def random_genome(self, rng):
        return rng.integers(0, 2, size=self.inst.n).astype(np.int8)

    def fitness_batch(self, genomes):
        X = np.asarray(genomes, dtype=np.float64)
        base = -(X @ self.inst.profits.astype(np.float64))
        loads = X @ self.inst.weights.astype(np.float64)
        excess = np.maximum(loads - self.inst.capacities.astype(np.float64), 0.0)
        return base + excess.sum(axis=1) * self.big

    def is_feasible(self, genome):
        loads = genome.astype(np.int64) @ self.inst.weights
        return bool((loads <= self.inst.capacities).all())

    def decode(self, genome):
        return genome.astype(np.int64)


class _QapProblem(_Problem):
    kind = "permutation"

    def __init__(self, inst: QapInstance):
        self.inst = inst

    def random_genome(self, rng):
        return (rng.permutation(self.inst.n) + 1).astype(np.int64)

    def fitness_batch(self, genomes):
        d = self.inst.distance
        f = self.inst.flow
        out = np.empty(len(genomes))
        for k, g in enumerate(genomes):
            idx = g - 1
            out[k] = float((f * d[np.ix_(idx, idx)]).sum())
        return out

    def decode(self, genome):
        return genome.copy()


class _TspProblem(_Problem):
    kind = "permutation"

    def __init__(self, inst: TspInstance):
        self.inst = inst

    def random_genome(self, rng):
        return (rng.permutation(self.inst.n_cities) + 1).astype(np.int64)

    def fitness_batch(self, genomes):
        G = np.asarray(genomes) - 1
        nxt = np.roll(G, -1, axis=1)
        return self.inst.distance[G, nxt].sum(axis=1).astype(np.float64)

    def decode(self, genome):
        return genome.copy()


def _adapt(problem) -> _Problem:
    if isinstance(problem, MkpInstance):
        return _MkpProblem(problem)
    if isinstance(problem, QapInstance):
        return _QapProblem(problem)
    if isinstance(problem, TspInstance):
        return _TspProblem(problem)
    raise TypeError(f"unsupported problem type {type(problem).__name__}")


# ---------------------------------------------------------------------------
# Main loop


def _make_offspring(pa, pb, cfg, rng):
    if rng.random() < cfg.crossover_rate:
        n = len(pa)
        ct = cfg.crossover_type
        if ct == "one_point":
            return crossover_one_point(pa, pb, int(rng.integers(0, n + 1)))
        if ct == "two_point":
            c1, c2 = sorted(int(v) for v in rng.integers(0, n + 1, size=2))
            return crossover_two_point(pa, pb, c1, c2)
        if ct == "uniform":
            return crossover_uniform(pa, pb, rng.random(n) < 0.5)
        if ct == "exponential":
            start = int(rng.integers(0, n))
            length = 1
            while length < n and rng.random() < 0.5:
                length += 1
            return crossover_exponential(pa, pb, start, length)
        if ct == "order":
            c1, c2 = sorted(int(v) for v in rng.integers(0, n + 1, size=2))
            if c1 == c2:
                c2 = c1 + 1 if c1 < n else c1 - 1
                c1, c2 = min(c1, c2), max(c1, c2)
            return (
                crossover_order(pa, pb, c1, c2),
                crossover_order(pb, pa, c1, c2),
            )
        if ct == "edge_recombination":
            return (
                crossover_edge_recombination(pa, pb, rng),
                crossover_edge_recombination(pa, pb, rng),
            )
        raise ValueError(f"unknown crossover_type {ct!r}")
    return pa.copy(), pb.copy()


def _mutate(g, mtype, rate, rng):
    if mtype == "bit_flip":
        return mutate_bitflip(g, rate, rng)
    if mtype == "inverse":
        return mutate_inverse(g, rate, rng)
    raise ValueError(f"unknown mutation_type {mtype!r}")


def evolve(problem, config: GaConfig, trace: bool = False) -> RunResult:
    """Run the GA on a problem instance in its natural representation and
    return the best feasible individual found within the budget."""
    prob = _adapt(problem)
    kind = prob.kind
    ct = config.crossover_type
    if kind == "binary" and ct not in _BINARY_CROSSOVERS:
        raise ValueError(f"crossover_type {ct!r} requires a permutation genome")
    if kind == "permutation" and ct not in _PERMUTATION_CROSSOVERS:
        raise ValueError(f"crossover_type {ct!r} requires a binary genome")
    mtype = config.mutation_type
    if mtype is None:
        mtype = "bit_flip" if kind == "binary" else "inverse"
    if kind == "binary" and mtype != "bit_flip":
        raise ValueError("binary genomes use bit_flip mutation")
    if kind == "permutation" and mtype != "inverse":
        raise ValueError("permutation genomes use inverse mutation")

    seed = config.seed
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    rng = np.random.default_rng(seed)
    p = config.population_size

    t_start = time.perf_counter()
    deadline = t_start + config.time_limit

    pop = [prob.random_genome(rng) for _ in range(p)]
    if config.eliminate_duplicates:
        pop = eliminate_duplicates(pop, prob.random_genome, rng)
    fits = prob.fitness_batch(pop)
    evaluations = len(pop)

    best_fit = np.inf
    best_genome = None
    time_to_best = 0.0
    energy_trace = [] if trace else None

    def consider(genomes, values):
        nonlocal best_fit, best_genome, time_to_best
        for g, v in zip(genomes, values):
            if v < best_fit - 1e-12 and prob.is_feasible(g):
                best_fit = v
                best_genome = g.copy()
                time_to_best = time.perf_counter() - t_start
                if energy_trace is not None:
                    energy_trace.append((time_to_best, best_fit))

    consider(pop, fits)

    generations = 0
    while True:
        if config.max_generations is not None and generations >= config.max_generations:
            break
        if config.max_generations is None and time.perf_counter() >= deadline:
            break
        if config.target_fitness is not None and best_fit <= config.target_fitness + 1e-9:
            break

        offspring = []
        seen = {_genome_key(g) for g in pop} if config.eliminate_duplicates else None
        tries = 0
        max_tries = 20 * p + 100
        while len(offspring) < p:
            i, j = int(rng.integers(p)), int(rng.integers(p))
            children = _make_offspring(pop[i], pop[j], config, rng)
            for child in children:
                child = _mutate(child, mtype, config.mutation_rate, rng)
                if seen is not None:
                    k = _genome_key(child)
                    tries += 1
                    if k in seen and tries < max_tries:
                        continue
                    seen.add(k)
                offspring.append(child)
                if len(offspring) >= p:
                    break
        if seen is not None and tries >= max_tries:
            offspring = eliminate_duplicates(offspring, prob.random_genome, rng)

        new_fits = prob.fitness_batch(offspring)
        evaluations += len(offspring)
        consider(offspring, new_fits)

        merged = pop + offspring
        merged_fits = np.concatenate([fits, new_fits])
        order = np.argsort(merged_fits, kind="stable")[:p]
        pop = [merged[k] for k in order]
        fits = merged_fits[order]
        generations += 1

    feasible = best_genome is not None
    if not feasible:
        # no feasible individual ever seen: report the penalized incumbent
        k = int(np.argmin(fits))
        best_genome = pop[k]
        best_fit = float(fits[k])
    return RunResult(
        best_energy=float(best_fit),
        best_state=np.asarray(best_genome),
        decoded=prob.decode(best_genome),
        feasible=feasible,
        time_to_best=time_to_best,
        attempts_completed=generations,
        iterations=evaluations,
        energy_trace=energy_trace,
    )
