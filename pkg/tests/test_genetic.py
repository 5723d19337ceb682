"""Genetic algorithm: pinned operator traces, closure properties, duplicate
elimination, and the evolve loop on small instances with known optima."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qubobench.genetic import (
    GaConfig,
    crossover_edge_recombination,
    crossover_exponential,
    crossover_one_point,
    crossover_order,
    crossover_two_point,
    crossover_uniform,
    eliminate_duplicates,
    evolve,
    mutate_bitflip,
    mutate_inverse,
)
from qubobench.instances import MkpInstance, QapInstance, TspInstance


def perm(*vals):
    return np.array(vals, dtype=np.int64)


def is_permutation(x, n):
    return np.array_equal(np.sort(x), np.arange(1, n + 1))


# ---------------------------------------------------------------------------
# binary crossovers


# [DERIVED] pinned example: one_point 0000 x 1111 at cut 2
def test_one_point_pinned_example():
    a = np.array([0, 0, 0, 0], dtype=np.int8)
    b = np.array([1, 1, 1, 1], dtype=np.int8)
    c1, c2 = crossover_one_point(a, b, 2)
    assert c1.tolist() == [0, 0, 1, 1]
    assert c2.tolist() == [1, 1, 0, 0]


# [TRIVIAL] degenerate cuts reproduce the parents
def test_one_point_degenerate_cuts():
    a = np.array([0, 1, 0, 1], dtype=np.int8)
    b = np.array([1, 0, 0, 1], dtype=np.int8)
    c1, c2 = crossover_one_point(a, b, 0)
    assert c1.tolist() == b.tolist() and c2.tolist() == a.tolist()
    c1, c2 = crossover_one_point(a, b, 4)
    assert c1.tolist() == a.tolist() and c2.tolist() == b.tolist()


def test_two_point_swaps_middle_segment():
    a = np.zeros(6, dtype=np.int8)
    b = np.ones(6, dtype=np.int8)
    c1, c2 = crossover_two_point(a, b, 2, 4)
    assert c1.tolist() == [0, 0, 1, 1, 0, 0]
    assert c2.tolist() == [1, 1, 0, 0, 1, 1]


def test_uniform_mask_selects_by_position():
    a = np.zeros(4, dtype=np.int8)
    b = np.ones(4, dtype=np.int8)
    mask = np.array([True, False, True, False])
    c1, c2 = crossover_uniform(a, b, mask)
    assert c1.tolist() == [0, 1, 0, 1]
    assert c2.tolist() == [1, 0, 1, 0]


def test_exponential_copies_wrapping_run():
    a = np.zeros(5, dtype=np.int8)
    b = np.ones(5, dtype=np.int8)
    c1, c2 = crossover_exponential(a, b, 3, 3)  # positions 3, 4, 0
    assert c1.tolist() == [1, 0, 0, 1, 1]
    assert c2.tolist() == [0, 1, 1, 0, 0]


# [TRIVIAL] identical parents are a fixed point of every binary variant
def test_identical_parents_fixed_point():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, size=12).astype(np.int8)
    for c1, c2 in (
        crossover_one_point(a, a.copy(), 5),
        crossover_two_point(a, a.copy(), 3, 9),
        crossover_uniform(a, a.copy(), rng.random(12) < 0.5),
        crossover_exponential(a, a.copy(), 7, 4),
    ):
        assert np.array_equal(c1, a)
        assert np.array_equal(c2, a)


def test_binary_crossovers_reject_length_mismatch():
    a = np.zeros(4, dtype=np.int8)
    b = np.zeros(5, dtype=np.int8)
    with pytest.raises(ValueError):
        crossover_one_point(a, b, 1)
    with pytest.raises(ValueError):
        crossover_two_point(a, b, 1, 2)
    with pytest.raises(ValueError):
        crossover_uniform(a, b, np.zeros(4, dtype=bool))
    with pytest.raises(ValueError):
        crossover_exponential(a, b, 0, 2)


# ---------------------------------------------------------------------------
# order crossover


# [DERIVED] pinned hand trace: keep p1[1:3), fill remaining positions left to
# right with p2's values in p2 order, skipping values already present
def test_order_crossover_pinned_example():
    child = crossover_order(perm(1, 2, 3, 4, 5), perm(5, 4, 3, 2, 1), 1, 3)
    assert child.tolist() == [5, 2, 3, 4, 1]


# [TRIVIAL] no new material when parents agree
def test_order_crossover_identity():
    p = perm(3, 1, 4, 2, 5)
    for cuts in [(0, 1), (1, 3), (0, 5), (4, 5)]:
        assert np.array_equal(crossover_order(p, p.copy(), *cuts), p)


def test_order_crossover_rejects_bad_cuts():
    p = perm(1, 2, 3)
    with pytest.raises(ValueError):
        crossover_order(p, p, 2, 2)
    with pytest.raises(ValueError):
        crossover_order(p, p, -1, 2)
    with pytest.raises(ValueError):
        crossover_order(p, p, 0, 4)


# [DERIVED] validity closure over many random parent pairs
def test_order_crossover_closure():
    rng = np.random.default_rng(1)
    for _ in range(2500):
        n = int(rng.integers(2, 12))
        p1 = rng.permutation(n) + 1
        p2 = rng.permutation(n) + 1
        c1, c2 = sorted(rng.integers(0, n + 1, size=2))
        if c1 == c2:
            continue
        child = crossover_order(p1.astype(np.int64), p2.astype(np.int64), int(c1), int(c2))
        assert is_permutation(child, n)


# ---------------------------------------------------------------------------
# edge recombination


# [TRIVIAL] identical parents: the adjacency graph is the parent cycle, so the
# child is the same cycle, possibly rotated or reversed
def test_edge_recombination_identity_up_to_rotation():
    rng = np.random.default_rng(2)
    p = perm(4, 1, 5, 2, 3)
    for _ in range(10):
        child = crossover_edge_recombination(p, p.copy(), rng)
        doubled = np.concatenate([p, p])
        forward = any(
            np.array_equal(child, doubled[k : k + len(p)]) for k in range(len(p))
        )
        rev = p[::-1]
        doubled_rev = np.concatenate([rev, rev])
        backward = any(
            np.array_equal(child, doubled_rev[k : k + len(p)]) for k in range(len(p))
        )
        assert forward or backward


# [DERIVED] every child valid over exhaustive n=4 parent pairs
def test_edge_recombination_exhaustive_small():
    from itertools import permutations

    rng = np.random.default_rng(3)
    for o1 in permutations(range(1, 5)):
        for o2 in permutations(range(1, 5)):
            child = crossover_edge_recombination(perm(*o1), perm(*o2), rng)
            assert is_permutation(child, 4)


# [DERIVED] instrumented: steps use a parental edge whenever the current
# adjacency set is nonempty, and such steps traverse real parent edges
def test_edge_recombination_uses_parental_edges():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(4, 10))
        p1 = (rng.permutation(n) + 1).astype(np.int64)
        p2 = (rng.permutation(n) + 1).astype(np.int64)
        edges = set()
        for parent in (p1, p2):
            for k in range(n):
                u, v = int(parent[k]), int(parent[(k + 1) % n])
                edges.add((u, v))
                edges.add((v, u))
        used = []
        child = crossover_edge_recombination(p1, p2, rng, trace=used)
        assert len(used) == n - 1
        for k, parental in enumerate(used):
            if parental:
                assert (int(child[k]), int(child[k + 1])) in edges


def test_edge_recombination_closure_bulk():
    rng = np.random.default_rng(5)
    for _ in range(2500):
        n = int(rng.integers(2, 10))
        p1 = (rng.permutation(n) + 1).astype(np.int64)
        p2 = (rng.permutation(n) + 1).astype(np.int64)
        child = crossover_edge_recombination(p1, p2, rng)
        assert is_permutation(child, n)


# ---------------------------------------------------------------------------
# mutation


# [TRIVIAL] rate-zero mutations are identities; rate-one bitflip complements
def test_mutation_rate_extremes():
    rng = np.random.default_rng(6)
    x = np.array([0, 1, 1, 0], dtype=np.int8)
    assert np.array_equal(mutate_bitflip(x, 0.0, rng), x)
    assert np.array_equal(mutate_bitflip(x, 1.0, rng), 1 - x)
    p = perm(2, 1, 4, 3)
    assert np.array_equal(mutate_inverse(p, 0.0, rng), p)


# [DERIVED] pinned segment reversal: (1,2,3,4,5) over [1,4) -> (1,4,3,2,5)
def test_mutate_inverse_pinned_segment():
    class FixedRng:
        def __init__(self):
            self.calls = 0

        def random(self):
            return 0.0  # always mutate

        def integers(self, lo, hi, size=None):
            return np.array([1, 3])

    out = mutate_inverse(perm(1, 2, 3, 4, 5), 0.5, FixedRng())
    assert out.tolist() == [1, 4, 3, 2, 5]


def test_mutate_inverse_closure():
    rng = np.random.default_rng(7)
    for _ in range(5000):
        n = int(rng.integers(2, 12))
        p = (rng.permutation(n) + 1).astype(np.int64)
        out = mutate_inverse(p, 0.8, rng)
        assert is_permutation(out, n)


def test_mutate_bitflip_expected_rate():
    rng = np.random.default_rng(8)
    x = np.zeros(10_000, dtype=np.int8)
    flipped = mutate_bitflip(x, 0.1, rng).sum()
    assert 800 < flipped < 1200


# ---------------------------------------------------------------------------
# duplicate elimination


def test_eliminate_duplicates_distinct_population_unchanged():
    rng = np.random.default_rng(9)
    pop = [np.array([i, i + 1], dtype=np.int8) for i in range(6)]
    out = eliminate_duplicates(pop, lambda r: r.integers(0, 2, size=2).astype(np.int8), rng)
    assert len(out) == 6
    assert all(np.array_equal(a, b) for a, b in zip(pop, out))


def test_eliminate_duplicates_collapses_and_refills():
    rng = np.random.default_rng(10)
    base = np.array([1, 0, 1, 0, 1, 0, 1, 0], dtype=np.int8)
    pop = [base.copy() for _ in range(8)]
    out = eliminate_duplicates(
        pop, lambda r: r.integers(0, 2, size=8).astype(np.int8), rng
    )
    assert len(out) == 8
    keys = {g.tobytes() for g in out}
    assert len(keys) == 8
    assert np.array_equal(out[0], base)


# [DERIVED] output size is always p, distinct whenever the space allows
@settings(max_examples=40, deadline=None)
@given(p=st.integers(2, 12), seed=st.integers(0, 10_000))
def test_eliminate_duplicates_size_property(p, seed):
    rng = np.random.default_rng(seed)
    pop = [rng.integers(0, 2, size=10).astype(np.int8) for _ in range(p)]
    out = eliminate_duplicates(
        pop, lambda r: r.integers(0, 2, size=10).astype(np.int8), rng
    )
    assert len(out) == p
    assert len({g.tobytes() for g in out}) == p


# ---------------------------------------------------------------------------
# evolve: config validation and small-instance behaviour


def small_mkp():
    return MkpInstance(
        n=6,
        profits=[10, 7, 4, 3, 6, 8],
        weights=[[5, 4], [4, 5], [3, 2], [1, 3], [4, 1], [2, 4]],
        capacities=[10, 9],
    )


def brute_force_mkp(inst):
    best = 0
    for bits in range(2**inst.n):
        x = np.array([(bits >> k) & 1 for k in range(inst.n)])
        if np.all(x @ inst.weights <= inst.capacities):
            best = max(best, int(inst.profits @ x))
    return best


def small_qap():
    rng = np.random.default_rng(11)
    n = 5
    d = rng.integers(1, 9, size=(n, n))
    d = (d + d.T) // 2
    np.fill_diagonal(d, 0)
    f = rng.integers(0, 6, size=(n, n))
    f = (f + f.T) // 2
    np.fill_diagonal(f, 0)
    return QapInstance(n=n, distance=d, flow=f)


def brute_force_qap(inst):
    from itertools import permutations

    best = math.inf
    for order in permutations(range(inst.n)):
        idx = np.array(order)
        val = (inst.flow * inst.distance[np.ix_(idx, idx)]).sum()
        best = min(best, int(val))
    return best


def small_tsp():
    rng = np.random.default_rng(12)
    n = 7
    d = rng.integers(2, 30, size=(n, n))
    d = (d + d.T) // 2
    np.fill_diagonal(d, 0)
    return TspInstance(n_cities=n, distance=d)


def brute_force_tsp(inst):
    from itertools import permutations

    n = inst.n_cities
    best = math.inf
    for rest in permutations(range(1, n)):
        order = (0,) + rest
        idx = np.array(order)
        best = min(best, int(inst.distance[idx, np.roll(idx, -1)].sum()))
    return best


def test_config_validation():
    with pytest.raises(ValueError):
        GaConfig(population_size=1)
    with pytest.raises(ValueError):
        GaConfig(selection_type="tournament")
    with pytest.raises(ValueError):
        GaConfig(crossover_rate=1.5)
    with pytest.raises(ValueError):
        GaConfig(mutation_rate=-0.1)
    with pytest.raises(ValueError):
        GaConfig(time_limit=0)
    with pytest.raises(ValueError):
        GaConfig(max_generations=0)


def test_operator_genome_kind_mismatch():
    with pytest.raises(ValueError):
        evolve(small_mkp(), GaConfig(crossover_type="order", seed=0, max_generations=1))
    with pytest.raises(ValueError):
        evolve(small_tsp(), GaConfig(crossover_type="uniform", seed=0, max_generations=1))
    with pytest.raises(ValueError):
        evolve(
            small_mkp(),
            GaConfig(crossover_type="uniform", mutation_type="inverse", seed=0,
                     max_generations=1),
        )
    with pytest.raises(TypeError):
        evolve(object(), GaConfig(seed=0, max_generations=1))


# [DERIVED] exhaustive oracle on a small knapsack; reported best feasible
def test_evolve_mkp_matches_brute_force():
    inst = small_mkp()
    target = brute_force_mkp(inst)
    cfg = GaConfig(population_size=20, crossover_type="uniform", crossover_rate=0.8,
                   mutation_rate=0.1, seed=21, max_generations=150)
    res = evolve(inst, cfg)
    assert res.feasible
    assert np.all(res.best_state @ inst.weights <= inst.capacities)
    assert -res.best_energy == target
    assert int(inst.profits @ res.decoded) == target


# [DERIVED] exhaustive oracle on a 5-facility assignment
@pytest.mark.parametrize("ct", ["order", "edge_recombination"])
def test_evolve_qap_matches_brute_force(ct):
    inst = small_qap()
    target = brute_force_qap(inst)
    cfg = GaConfig(population_size=24, crossover_type=ct, crossover_rate=0.8,
                   mutation_rate=0.15, seed=22, max_generations=120)
    res = evolve(inst, cfg)
    assert res.feasible
    assert res.best_energy == target
    assert is_permutation(res.best_state, inst.n)


# [DERIVED] exhaustive oracle on a 7-city tour
def test_evolve_tsp_matches_brute_force():
    inst = small_tsp()
    target = brute_force_tsp(inst)
    cfg = GaConfig(population_size=24, crossover_type="order", crossover_rate=0.85,
                   mutation_rate=0.2, seed=23, max_generations=200)
    res = evolve(inst, cfg)
    assert res.best_energy == target
    assert is_permutation(res.best_state, inst.n_cities)


# [DERIVED] no variation: zero crossover and mutation rates make reproduction
# pure cloning, so the final best equals the best feasible genome of the
# initial population (reconstructed from the same seed)
def test_evolve_no_variation_keeps_best():
    from qubobench.genetic import _MkpProblem

    inst = small_mkp()
    cfg = GaConfig(population_size=8, crossover_type="uniform", crossover_rate=0.0,
                   mutation_rate=0.0, eliminate_duplicates=False, seed=24,
                   max_generations=40)
    res = evolve(inst, cfg)
    prob = _MkpProblem(inst)
    rng = np.random.default_rng(24)
    pop0 = [prob.random_genome(rng) for _ in range(8)]
    fits0 = prob.fitness_batch(pop0)
    expected = min(v for g, v in zip(pop0, fits0) if prob.is_feasible(g))
    assert res.best_energy == expected
    assert res.feasible


def test_evolve_seeded_determinism():
    inst = small_qap()
    cfg = GaConfig(population_size=16, crossover_type="order", seed=77,
                   max_generations=60)
    a = evolve(inst, cfg)
    b = evolve(inst, cfg)
    assert a.best_energy == b.best_energy
    assert np.array_equal(a.best_state, b.best_state)
    assert a.attempts_completed == b.attempts_completed
    assert a.iterations == b.iterations


def test_evolve_target_fitness_stops_early():
    inst = small_qap()
    target = brute_force_qap(inst)
    cfg = GaConfig(population_size=24, crossover_type="order", seed=25,
                   max_generations=500, target_fitness=float(target))
    res = evolve(inst, cfg)
    assert res.best_energy == target
    assert res.attempts_completed < 500


def test_evolve_trace_monotone():
    inst = small_tsp()
    cfg = GaConfig(population_size=16, crossover_type="edge_recombination", seed=26,
                   max_generations=80)
    res = evolve(inst, cfg, trace=True)
    values = [v for _, v in res.energy_trace]
    assert values == sorted(values, reverse=True)
    assert math.isclose(values[-1], res.best_energy)


def test_evolve_time_limit_mode_terminates():
    import time

    inst = small_tsp()
    cfg = GaConfig(population_size=16, crossover_type="order", seed=27, time_limit=0.2)
    t0 = time.perf_counter()
    res = evolve(inst, cfg)
    assert time.perf_counter() - t0 < 2.0
    assert res.attempts_completed > 0


# MKP: population may carry infeasible genomes, but any feasible genome
# outranks every infeasible one under the penalty
def test_mkp_penalty_dominance():
    inst = MkpInstance(
        n=4, profits=[9, 9, 9, 9], weights=[[5], [5], [5], [5]], capacities=[5]
    )
    from qubobench.genetic import _MkpProblem

    prob = _MkpProblem(inst)
    feas = [np.array(g, dtype=np.int8) for g in
            ([0, 0, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1])]
    infeas = [np.array(g, dtype=np.int8) for g in
              ([1, 1, 0, 0], [1, 1, 1, 1])]
    f_feas = prob.fitness_batch(feas)
    f_infeas = prob.fitness_batch(infeas)
    assert f_feas.max() < f_infeas.min()
