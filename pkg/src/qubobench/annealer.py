"""Single-flip stochastic annealer with offset-based escape.

Every iteration evaluates the energy delta of flipping each variable against
the same frozen state, records every flip that passes an independent
acceptance draw, applies exactly one uniformly chosen recorded flip, and, when
nothing was recorded, raises an escape offset that relaxes the next round of
acceptance tests. Multiple independent attempts share the wall-clock budget in
equal sequential slices; attempts restart from a fresh random state after a
configurable number of non-improving iterations.

Two engines implement the identical update rule: a compiled kernel (numba,
used when available) and a vectorised numpy fallback. Both are deterministic
given a seed; their random streams differ from each other.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from .instances import MkpInstance
from .qubo import QuboMatrix

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


__all__ = [
    "AttemptState",
    "DaConfig",
    "RunResult",
    "accept_probability",
    "temperature_at",
    "resolve_da_config",
    "reference_attempt",
    "anneal",
    "anneal_with_inequalities",
    "HAVE_NUMBA",
]


@dataclass(frozen=True)
class DaConfig:
    """Annealer controls. None fields are resolved per problem:

    initial_temperature defaults to the largest diagonal magnitude plus the
    mean absolute flip delta over a 100-step random walk; final_temperature to
    1e-4 of the initial; temperature_interval to the variable count; and
    offset_increase_rate to 1% of the initial temperature.
    """

    initial_temperature: float | None = None
    final_temperature: float | None = None
    decay_factor: float = 0.97
    temperature_interval: int | None = None
    offset_increase_rate: float | None = None
    num_run: int = 16
    num_group: int = 1
    restart_interval_scale: int = 5
    no_improvement_cutoff: int = 400_000
    time_limit: float = 1.0
    seed: int | None = None
    max_iterations: int | None = None
    target_energy: float | None = None

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        for name, value in (("num_run", self.num_run), ("num_group", self.num_group)):
            if not 1 <= value <= 16:
                raise ValueError(f"{name} must lie in 1..16")
        if not 0 <= self.restart_interval_scale <= 100:
            raise ValueError("restart_interval_scale must lie in 0..100")
        if not 0 <= self.no_improvement_cutoff <= 1_000_000:
            raise ValueError("no_improvement_cutoff must lie in 0..1000000")
        if self.initial_temperature is not None and self.initial_temperature <= 0:
            raise ValueError("initial_temperature must be positive")
        if self.final_temperature is not None and self.final_temperature <= 0:
            raise ValueError("final_temperature must be positive")
        if (
            self.initial_temperature is not None
            and self.final_temperature is not None
            and self.final_temperature > self.initial_temperature
        ):
            raise ValueError("final_temperature must not exceed initial_temperature")
        if self.offset_increase_rate is not None and self.offset_increase_rate < 0:
            raise ValueError("offset_increase_rate must be nonnegative")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive when set")


@dataclass
class RunResult:
    best_energy: float
    best_state: np.ndarray
    decoded: object | None
    feasible: bool
    time_to_best: float
    attempts_completed: int
    iterations: int = 0
    applied_flips: int = 0
    restarts: int = 0
    energy_trace: list | None = None


def accept_probability(delta_e: float, e_offset: float, temperature: float) -> float:
    """exp(min(0, -(delta_e - e_offset) / temperature)); 1 when the shifted
    delta is nonpositive."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return math.exp(min(0.0, -(delta_e - e_offset) / temperature))


def temperature_at(iteration: int, config: DaConfig) -> float:
    """Staircase schedule: the temperature steps down by decay_factor once per
    temperature_interval iterations and never falls below the floor."""
    if config.initial_temperature is None or config.final_temperature is None:
        raise ValueError("temperatures must be resolved; see resolve_da_config")
    if config.temperature_interval is None or config.temperature_interval < 1:
        raise ValueError("temperature_interval must be resolved and positive")
    k = iteration // config.temperature_interval
    return max(config.final_temperature, config.initial_temperature * config.decay_factor**k)


def _restart_threshold(config: DaConfig) -> int:
    # 0 disables restarts entirely
    if config.no_improvement_cutoff == 0:
        return 0
    return max(
        1, math.ceil(config.no_improvement_cutoff * config.restart_interval_scale / 100)
    )


def _walk_scale(S: np.ndarray, diag: np.ndarray, rng: np.random.Generator) -> float:
    """Mean absolute flip delta over a 100-step random walk."""
    m = len(diag)
    x = rng.integers(0, 2, size=m).astype(np.float64)
    h = S @ x + diag * (1 - x)
    total = 0.0
    for _ in range(100):
        j = int(rng.integers(m))
        sign = 1.0 - 2.0 * x[j]
        d = sign * h[j]
        total += abs(d)
        h += sign * S[:, j]
        h[j] -= sign * S[j, j]
        x[j] = 1 - x[j]
    return total / 100.0


def resolve_da_config(Q: QuboMatrix, config: DaConfig) -> DaConfig:
    """Fill auto fields deterministically from the problem and the seed."""
    seed = config.seed
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    updates = {"seed": seed}
    if config.temperature_interval is None:
        updates["temperature_interval"] = Q.size
    if (
        config.initial_temperature is None
        or config.final_temperature is None
        or config.offset_increase_rate is None
    ):
        S = Q.dense_symmetric()
        diag = np.diagonal(S)
        walk_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        t0 = config.initial_temperature
        if t0 is None:
            t0 = float(np.abs(diag).max(initial=0.0)) + _walk_scale(S, diag, walk_rng)
            if t0 <= 0:
                t0 = 1.0
            updates["initial_temperature"] = t0
        if config.final_temperature is None:
            updates["final_temperature"] = max(t0 * 1e-4, 1e-12)
        if config.offset_increase_rate is None:
            updates["offset_increase_rate"] = t0 / 100.0
    return replace(config, **updates)


@dataclass
class AttemptState:
    """Observable state of one attempt, maintained by the reference stepper.

    e_offset is always rejected_streak * offset_increase_rate, computed as a
    product so that a long rejected streak can be advanced in one step without
    changing the arithmetic (the compiled kernels rely on this).
    """

    x: np.ndarray
    fields: np.ndarray
    e_offset: float
    current_energy: float
    best_energy: float
    best_state: np.ndarray
    iterations_since_improvement: int
    iteration: int
    rejected_streak: int
    applied_flips: int = 0


def reference_attempt(Q: QuboMatrix, config: DaConfig, n_iterations: int) -> AttemptState:
    """Plain per-iteration implementation of a single attempt, kept readable.

    Uses the same legacy generator and draw order as the compiled kernel, so
    with an identical seed the trajectory matches anneal(..., num_run=1,
    num_group=1, max_iterations=n_iterations) bit for bit. Serves as the
    behavioural oracle in the tests; restarts are not modelled.
    """
    cfg = resolve_da_config(Q, config)
    m = Q.size
    S = Q.dense_symmetric()
    diag = np.ascontiguousarray(np.diagonal(S)).astype(np.float64)
    np.random.seed(int(np.random.SeedSequence(cfg.seed).spawn(1)[0].generate_state(1)[0]))

    x = np.zeros(m)
    for j in range(m):
        x[j] = 1.0 if np.random.random() < 0.5 else 0.0
    h = S @ x + diag * (1 - x)
    e_cur = Q.offset + 0.5 * float(x @ (h + diag))
    state = AttemptState(
        x=x,
        fields=h,
        e_offset=0.0,
        current_energy=e_cur,
        best_energy=e_cur,
        best_state=x.copy(),
        iterations_since_improvement=0,
        iteration=0,
        rejected_streak=0,
    )
    rate = cfg.offset_increase_rate
    for _ in range(n_iterations):
        T = temperature_at(state.iteration, cfg)
        state.e_offset = rate * state.rejected_streak
        recorded = []
        for j in range(m):
            arg = (1.0 - 2.0 * x[j]) * h[j] - state.e_offset
            if arg <= 0.0:
                recorded.append(j)
            elif arg < 50.0 * T:  # beyond this the acceptance draw cannot pass
                if np.random.random() < np.exp(-arg / T):
                    recorded.append(j)
        if recorded:
            jstar = recorded[np.random.randint(0, len(recorded))]
            sign = 1.0 - 2.0 * x[jstar]
            state.current_energy += sign * h[jstar]
            h += sign * S[:, jstar]
            h[jstar] -= sign * S[jstar, jstar]
            x[jstar] = 1 - x[jstar]
            state.rejected_streak = 0
            state.e_offset = 0.0
            state.applied_flips += 1
        else:
            state.rejected_streak += 1
            state.e_offset = rate * state.rejected_streak
        state.iteration += 1
        if state.current_energy < state.best_energy - 1e-12:
            state.best_energy = state.current_energy
            state.best_state = x.copy()
            state.iterations_since_improvement = 0
        else:
            state.iterations_since_improvement += 1
    return state


# ---------------------------------------------------------------------------
# Compiled kernels. Mutable attempt state travels in `st`:
# st[0] current energy, st[1] constraint energy, st[2] consecutive rejected
# iterations (the escape offset is rate * st[2], computed fresh each
# iteration so that bulk-advancing rejected iterations is exact),
# st[3] iterations since improvement, st[4] trajectory iteration,
# st[5] best energy, st[6] best feasible energy, st[7] feasible-found flag,
# st[8] improved-in-chunk flag, st[9] needs-fresh-state flag,
# st[10] applied-flip count, st[11] restart count.
# Static parameters travel in `par`:
# par[0..3] t0, t_final, decay, t_interval; par[4] offset rate;
# par[5] restart threshold; par[6..7] target, target enabled;
# par[8] track constraint flag; par[9..10] cost and constraint offsets.


@njit(cache=True)
def _seed_kernel(seed):
    np.random.seed(seed)


@njit(cache=True)
def _da_chunk(S, diag, Sg, diag_g, x, h, hg, rec, st, par, best_x, bestf_x, n_iters):
    m = x.shape[0]
    t0, tfin, decay, t_interval = par[0], par[1], par[2], par[3]
    off_rate, restart_after = par[4], par[5]
    target = par[6]
    has_target = par[7] > 0.5
    track_g = par[8] > 0.5
    q_offset, g_offset = par[9], par[10]

    e_cur, g_cur, stuck = st[0], st[1], st[2]
    since, it = st[3], st[4]
    best_e, bestf_e = st[5], st[6]
    st[8] = 0.0

    status = 0
    done = 0
    ff_checked = False
    for _ in range(n_iters):
        if st[9] > 0.5:
            for j in range(m):
                x[j] = 1 if np.random.random() < 0.5 else 0
            for j in range(m):
                acc = diag[j] * (1.0 - x[j])
                for i in range(m):
                    acc += S[i, j] * x[i]
                h[j] = acc
            e_cur = q_offset
            for j in range(m):
                if x[j] == 1:
                    e_cur += 0.5 * (h[j] + diag[j])
            if track_g:
                for j in range(m):
                    acc = diag_g[j] * (1.0 - x[j])
                    for i in range(m):
                        acc += Sg[i, j] * x[i]
                    hg[j] = acc
                g_cur = g_offset
                for j in range(m):
                    if x[j] == 1:
                        g_cur += 0.5 * (hg[j] + diag_g[j])
            stuck = 0.0
            since = 0.0
            it = 0.0
            st[9] = 0.0
            if e_cur < best_e - 1e-12:
                best_e = e_cur
                for j in range(m):
                    best_x[j] = x[j]
                st[8] = 1.0
            if track_g and abs(g_cur) < 1e-9 and e_cur < bestf_e - 1e-12:
                bestf_e = e_cur
                for j in range(m):
                    bestf_x[j] = x[j]
                st[7] = 1.0
                st[8] = 1.0

        k = int(it / t_interval)
        T = t0 * decay**k
        if T < tfin:
            T = tfin

        # Stuck-phase fast-forward: while every proposal satisfies
        # arg >= 50T, no draw is consumed and no flip can fire, so those
        # all-rejected iterations are advanced in closed form. Only taken at
        # the temperature floor (constant T) with a positive offset rate,
        # and never across an improvement/restart boundary; the resulting
        # trajectory and random stream are identical to stepping one by one.
        # The state freezes between flips, so one check per stuck phase
        # suffices: afterwards e_offset only grows toward the window.
        if T == tfin and off_rate > 0.0 and not ff_checked and n_iters - done > 1:
            ff_checked = True
            min_d = np.inf
            for j in range(m):
                d_j = (1.0 - 2.0 * x[j]) * h[j]
                if d_j < min_d:
                    min_d = d_j
            gap = min_d - 50.0 * T - off_rate * stuck
            if gap > 0.0:
                # leave a two-iteration margin so division rounding can
                # never advance past an iteration that would draw
                k_skip = int(gap / off_rate) - 2
                limit = n_iters - done - 1
                if k_skip > limit:
                    k_skip = limit
                if restart_after > 0.0:
                    room = int(restart_after - since) - 1
                    if k_skip > room:
                        k_skip = room
                if k_skip > 0:
                    stuck += k_skip
                    it += k_skip
                    since += k_skip
                    done += k_skip

        e_off = off_rate * stuck
        n_acc = 0
        for j in range(m):
            d_j = (1.0 - 2.0 * x[j]) * h[j]
            arg = d_j - e_off
            if arg <= 0.0:
                # acceptance probability is exactly 1; no draw needed
                rec[n_acc] = j
                n_acc += 1
            elif arg < 50.0 * T:
                if np.random.random() < np.exp(-arg / T):
                    rec[n_acc] = j
                    n_acc += 1

        if n_acc > 0:
            jstar = rec[np.random.randint(0, n_acc)]
            sign = 1.0 - 2.0 * x[jstar]
            e_cur += sign * h[jstar]
            if track_g:
                g_cur += sign * hg[jstar]
            for i in range(m):
                h[i] += sign * S[i, jstar]
            h[jstar] -= sign * S[jstar, jstar]
            if track_g:
                for i in range(m):
                    hg[i] += sign * Sg[i, jstar]
                hg[jstar] -= sign * Sg[jstar, jstar]
            x[jstar] = 1 - x[jstar]
            stuck = 0.0
            st[10] += 1.0
            ff_checked = False
        else:
            stuck += 1.0

        it += 1.0
        done += 1

        improved = False
        if e_cur < best_e - 1e-12:
            best_e = e_cur
            for j in range(m):
                best_x[j] = x[j]
            improved = True
            st[8] = 1.0
        if track_g and abs(g_cur) < 1e-9 and e_cur < bestf_e - 1e-12:
            bestf_e = e_cur
            for j in range(m):
                bestf_x[j] = x[j]
            st[7] = 1.0
            st[8] = 1.0
            improved = True
        if improved:
            since = 0.0
        else:
            since += 1.0

        if has_target:
            rep = bestf_e if track_g else best_e
            if rep <= target + 1e-9:
                status = 1
                st[0], st[1], st[2], st[3], st[4] = e_cur, g_cur, stuck, since, it
                st[5], st[6] = best_e, bestf_e
                return status, done

        if restart_after > 0.0 and since >= restart_after:
            st[9] = 1.0
            st[11] += 1.0
            ff_checked = False

        if done >= n_iters:  # fast-forward can cover several loop passes
            break

    st[0], st[1], st[2], st[3], st[4] = e_cur, g_cur, stuck, since, it
    st[5], st[6] = best_e, bestf_e
    return status, done


@njit(cache=True)
def _ineq_chunk(S, diag, weights_t, caps, loads, x, h, rec, st, par, best_x, n_iters):
    """Feasibility-preserving variant: a flip that would overload any
    constraint is never recorded; restarts refill greedily in random order."""
    n = x.shape[0]
    n_cons = caps.shape[0]
    t0, tfin, decay, t_interval = par[0], par[1], par[2], par[3]
    off_rate, restart_after = par[4], par[5]
    target = par[6]
    has_target = par[7] > 0.5
    q_offset = par[9]

    e_cur, stuck = st[0], st[2]
    since, it = st[3], st[4]
    best_e = st[5]
    st[8] = 0.0

    status = 0
    done = 0
    ff_checked = False
    for _ in range(n_iters):
        if st[9] > 0.5:
            for j in range(n):
                x[j] = 0
                rec[j] = j
            for k in range(n_cons):
                loads[k] = 0.0
            for j in range(n - 1, 0, -1):  # random item order
                r = np.random.randint(0, j + 1)
                rec[j], rec[r] = rec[r], rec[j]
            for idx in range(n):
                j = rec[idx]
                fits = True
                for k in range(n_cons):
                    if loads[k] + weights_t[k, j] > caps[k]:
                        fits = False
                        break
                if fits:
                    x[j] = 1
                    for k in range(n_cons):
                        loads[k] += weights_t[k, j]
            for j in range(n):
                acc = diag[j] * (1.0 - x[j])
                for i in range(n):
                    acc += S[i, j] * x[i]
                h[j] = acc
            e_cur = q_offset
            for j in range(n):
                if x[j] == 1:
                    e_cur += 0.5 * (h[j] + diag[j])
            stuck = 0.0
            since = 0.0
            it = 0.0
            st[9] = 0.0
            if e_cur < best_e - 1e-12:
                best_e = e_cur
                for j in range(n):
                    best_x[j] = x[j]
                st[8] = 1.0

        k_t = int(it / t_interval)
        T = t0 * decay**k_t
        if T < tfin:
            T = tfin

        # Stuck-phase fast-forward over the eligible-move set (see the
        # unconstrained kernel): all-rejected floor iterations consume no
        # randomness and leave the state frozen, so they advance in bulk.
        if T == tfin and off_rate > 0.0 and not ff_checked and n_iters - done > 1:
            ff_checked = True
            min_d = np.inf
            for j in range(n):
                if x[j] == 0:
                    fits = True
                    for k in range(n_cons):
                        if loads[k] + weights_t[k, j] > caps[k]:
                            fits = False
                            break
                    if not fits:
                        continue
                d_j = (1.0 - 2.0 * x[j]) * h[j]
                if d_j < min_d:
                    min_d = d_j
            gap = min_d - 50.0 * T - off_rate * stuck
            if gap > 0.0:
                # two-iteration margin, as in the unconstrained kernel
                k_skip = int(gap / off_rate) - 2
                limit = n_iters - done - 1
                if k_skip > limit:
                    k_skip = limit
                if restart_after > 0.0:
                    room = int(restart_after - since) - 1
                    if k_skip > room:
                        k_skip = room
                if k_skip > 0:
                    stuck += k_skip
                    it += k_skip
                    since += k_skip
                    done += k_skip

        e_off = off_rate * stuck
        n_acc = 0
        for j in range(n):
            if x[j] == 0:
                fits = True
                for k in range(n_cons):
                    if loads[k] + weights_t[k, j] > caps[k]:
                        fits = False
                        break
                if not fits:
                    continue
            d_j = (1.0 - 2.0 * x[j]) * h[j]
            arg = d_j - e_off
            if arg <= 0.0:
                rec[n_acc] = j
                n_acc += 1
            elif arg < 50.0 * T:
                if np.random.random() < np.exp(-arg / T):
                    rec[n_acc] = j
                    n_acc += 1

        if n_acc > 0:
            jstar = rec[np.random.randint(0, n_acc)]
            sign = 1.0 - 2.0 * x[jstar]
            e_cur += sign * h[jstar]
            for i in range(n):
                h[i] += sign * S[i, jstar]
            h[jstar] -= sign * S[jstar, jstar]
            for k in range(n_cons):
                loads[k] += sign * weights_t[k, jstar]
            x[jstar] = 1 - x[jstar]
            stuck = 0.0
            st[10] += 1.0
            ff_checked = False
        else:
            stuck += 1.0

        it += 1.0
        done += 1

        if e_cur < best_e - 1e-12:
            best_e = e_cur
            for j in range(n):
                best_x[j] = x[j]
            since = 0.0
            st[8] = 1.0
        else:
            since += 1.0

        if has_target and best_e <= target + 1e-9:
            status = 1
            st[0], st[2], st[3], st[4], st[5] = e_cur, stuck, since, it, best_e
            return status, done

        if restart_after > 0.0 and since >= restart_after:
            st[9] = 1.0
            st[11] += 1.0
            ff_checked = False

        if done >= n_iters:  # fast-forward can cover several loop passes
            break

    st[0], st[2], st[3], st[4], st[5] = e_cur, stuck, since, it, best_e
    return status, done


# ---------------------------------------------------------------------------
# Numpy fallback engine (same update rule, its own random stream)


def _fresh_state_numpy(S, diag, q_offset, rng, m):
    x = (rng.random(m) < 0.5).astype(np.float64)
    h = S @ x + diag * (1 - x)
    e = q_offset + 0.5 * float(x @ (h + diag))
    return x, h, e


def _da_chunk_numpy(S, diag, Sg, diag_g, x, h, hg, st, par, best_x, bestf_x, n_iters, rng):
    m = x.shape[0]
    t0, tfin, decay, t_interval = par[0], par[1], par[2], par[3]
    off_rate, restart_after = par[4], par[5]
    target, has_target, track_g = par[6], par[7] > 0.5, par[8] > 0.5
    q_offset, g_offset = par[9], par[10]

    e_cur, g_cur, stuck = st[0], st[1], st[2]
    since, it = st[3], st[4]
    best_e, bestf_e = st[5], st[6]
    st[8] = 0.0

    status = 0
    done = 0
    for _ in range(n_iters):
        if st[9] > 0.5:
            x[:], h[:], e_cur = _fresh_state_numpy(S, diag, q_offset, rng, m)
            if track_g:
                hg[:] = Sg @ x + diag_g * (1 - x)
                g_cur = g_offset + 0.5 * float(x @ (hg + diag_g))
            stuck = since = 0.0
            it = 0.0
            st[9] = 0.0
            if e_cur < best_e - 1e-12:
                best_e = e_cur
                best_x[:] = x
                st[8] = 1.0
            if track_g and abs(g_cur) < 1e-9 and e_cur < bestf_e - 1e-12:
                bestf_e = e_cur
                bestf_x[:] = x
                st[7] = st[8] = 1.0

        T = max(tfin, t0 * decay ** int(it / t_interval))
        d = (1.0 - 2.0 * x) * h
        arg = d - off_rate * stuck
        auto = arg <= 0.0
        cand = ~auto & (arg < 50.0 * T)
        u = rng.random(m)
        accepted = auto | (cand & (u < np.exp(-np.where(cand, arg, 0.0) / T)))
        idxs = np.flatnonzero(accepted)
        if idxs.size:
            jstar = int(idxs[rng.integers(idxs.size)])
            sign = 1.0 - 2.0 * x[jstar]
            e_cur += sign * h[jstar]
            col = S[:, jstar]
            h += sign * col
            h[jstar] -= sign * col[jstar]
            if track_g:
                g_cur += sign * hg[jstar]
                colg = Sg[:, jstar]
                hg += sign * colg
                hg[jstar] -= sign * colg[jstar]
            x[jstar] = 1 - x[jstar]
            stuck = 0.0
            st[10] += 1.0
        else:
            stuck += 1.0

        it += 1.0
        done += 1

        improved = False
        if e_cur < best_e - 1e-12:
            best_e = e_cur
            best_x[:] = x
            improved = True
            st[8] = 1.0
        if track_g and abs(g_cur) < 1e-9 and e_cur < bestf_e - 1e-12:
            bestf_e = e_cur
            bestf_x[:] = x
            st[7] = st[8] = 1.0
            improved = True
        since = 0.0 if improved else since + 1.0

        if has_target and (bestf_e if track_g else best_e) <= target + 1e-9:
            status = 1
            break

        if restart_after > 0.0 and since >= restart_after:
            st[9] = 1.0
            st[11] += 1.0

    st[0], st[1], st[2], st[3], st[4] = e_cur, g_cur, stuck, since, it
    st[5], st[6] = best_e, bestf_e
    return status, done


def _ineq_chunk_numpy(S, diag, weights_t, caps, loads, x, h, st, par, best_x, n_iters, rng):
    n = x.shape[0]
    t0, tfin, decay, t_interval = par[0], par[1], par[2], par[3]
    off_rate, restart_after = par[4], par[5]
    target, has_target = par[6], par[7] > 0.5
    q_offset = par[9]

    e_cur, stuck = st[0], st[2]
    since, it = st[3], st[4]
    best_e = st[5]
    st[8] = 0.0

    status = 0
    done = 0
    for _ in range(n_iters):
        if st[9] > 0.5:
            x[:] = 0.0
            loads[:] = 0.0
            for j in rng.permutation(n):
                if ((loads + weights_t[:, j]) <= caps).all():
                    x[j] = 1.0
                    loads += weights_t[:, j]
            h[:] = S @ x + diag * (1 - x)
            e_cur = q_offset + 0.5 * float(x @ (h + diag))
            stuck = since = 0.0
            it = 0.0
            st[9] = 0.0
            if e_cur < best_e - 1e-12:
                best_e = e_cur
                best_x[:] = x
                st[8] = 1.0

        T = max(tfin, t0 * decay ** int(it / t_interval))
        d = (1.0 - 2.0 * x) * h
        arg = d - off_rate * stuck
        would_fit = ((loads[:, None] + weights_t) <= caps[:, None]).all(axis=0)
        allowed = (x == 1) | would_fit
        auto = (arg <= 0.0) & allowed
        cand = allowed & ~auto & (arg < 50.0 * T)
        u = rng.random(n)
        accepted = auto | (cand & (u < np.exp(-np.where(cand, arg, 0.0) / T)))
        idxs = np.flatnonzero(accepted)
        if idxs.size:
            jstar = int(idxs[rng.integers(idxs.size)])
            sign = 1.0 - 2.0 * x[jstar]
            e_cur += sign * h[jstar]
            col = S[:, jstar]
            h += sign * col
            h[jstar] -= sign * col[jstar]
            loads += sign * weights_t[:, jstar]
            x[jstar] = 1 - x[jstar]
            stuck = 0.0
            st[10] += 1.0
        else:
            stuck += 1.0

        it += 1.0
        done += 1

        if e_cur < best_e - 1e-12:
            best_e = e_cur
            best_x[:] = x
            since = 0.0
            st[8] = 1.0
        else:
            since += 1.0

        if has_target and best_e <= target + 1e-9:
            status = 1
            break

        if restart_after > 0.0 and since >= restart_after:
            st[9] = 1.0
            st[11] += 1.0

    st[0], st[2], st[3], st[4], st[5] = e_cur, stuck, since, it, best_e
    return status, done


# ---------------------------------------------------------------------------
# Attempt scheduling


_warmed_up = False


def _ensure_compiled():
    global _warmed_up
    if _warmed_up or not HAVE_NUMBA:
        return
    S = np.zeros((2, 2))
    par = np.array([1.0, 0.1, 0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    st = np.zeros(12)
    st[5] = st[6] = np.inf
    st[9] = 1.0
    _seed_kernel(1)
    _da_chunk(
        S, np.zeros(2), S, np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2),
        np.zeros(2, dtype=np.int64), st, par, np.zeros(2), np.zeros(2), 2,
    )
    st2 = np.zeros(12)
    st2[5] = np.inf
    st2[9] = 1.0
    _ineq_chunk(
        S, np.zeros(2), np.ones((1, 2)), np.full(1, 9.0), np.zeros(1),
        np.zeros(2), np.zeros(2), np.zeros(2, dtype=np.int64), st2, par,
        np.zeros(2), 2,
    )
    _warmed_up = True


def _engine_choice(engine: str) -> str:
    if engine == "auto":
        if os.environ.get("QUBOBENCH_ENGINE") in ("numpy", "numba"):
            engine = os.environ["QUBOBENCH_ENGINE"]
        else:
            engine = "numba" if HAVE_NUMBA else "numpy"
    if engine == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba engine requested but numba is not installed")
    if engine not in ("numba", "numpy"):
        raise ValueError(f"unknown engine {engine!r}")
    return engine


def _run_attempts(kernel_args_builder, cfg: DaConfig, engine: str, m: int, trace: bool):
    """Shared scheduler: equal sequential time slices, or a fixed iteration
    budget per attempt when max_iterations is set."""
    engine = _engine_choice(engine)
    if engine == "numba":
        _ensure_compiled()
    attempts = cfg.num_run * cfg.num_group
    children = np.random.SeedSequence(cfg.seed).spawn(attempts)

    best_e = math.inf
    best_x = None
    bestf_e = math.inf
    bestf_x = None
    found_feasible = False
    time_best = 0.0
    time_bestf = 0.0
    attempts_completed = 0
    iterations = 0
    applied_flips = 0
    restarts = 0
    energy_trace = [] if trace else None

    t_start = time.perf_counter()
    budget = cfg.max_iterations
    stop = False
    for a in range(attempts):
        if stop:
            break
        run_chunk, st, arrays = kernel_args_builder(children[a], engine)
        slice_end = t_start + (a + 1) * cfg.time_limit / attempts
        remaining = budget
        attempt_iters = 0
        chunk = 256
        while True:
            if budget is not None:
                if remaining <= 0:
                    break
                n_iters = min(remaining, 1_000_000)
            else:
                now = time.perf_counter()
                if now >= slice_end:
                    break
                n_iters = chunk
            t_chunk = time.perf_counter()
            status, done = run_chunk(n_iters)
            now = time.perf_counter()
            attempt_iters += done
            if budget is not None:
                remaining -= done
            elif done:
                per_iter = max((now - t_chunk) / done, 1e-9)
                chunk = int(min(max(0.04 / per_iter, 64), 2_000_000))
            if st[8] > 0.5:
                if st[5] < best_e - 1e-12:
                    best_e = st[5]
                    best_x = arrays["best_x"].copy()
                    time_best = now - t_start
                    if energy_trace is not None:
                        energy_trace.append((time_best, best_e))
                if st[7] > 0.5 and st[6] < bestf_e - 1e-12:
                    bestf_e = st[6]
                    bestf_x = arrays["bestf_x"].copy()
                    found_feasible = True
                    time_bestf = now - t_start
            if status == 1:
                stop = True
                break
        attempts_completed += 1
        iterations += attempt_iters
        applied_flips += int(st[10])
        restarts += int(st[11])
    return {
        "best_e": best_e,
        "best_x": best_x,
        "bestf_e": bestf_e,
        "bestf_x": bestf_x,
        "found_feasible": found_feasible,
        "time_best": time_best,
        "time_bestf": time_bestf,
        "attempts_completed": attempts_completed,
        "iterations": iterations,
        "applied_flips": applied_flips,
        "restarts": restarts,
        "energy_trace": energy_trace,
    }


def anneal(
    Q: QuboMatrix,
    config: DaConfig,
    constraint: QuboMatrix | None = None,
    decoder=None,
    engine: str = "auto",
    trace: bool = False,
) -> RunResult:
    """Minimise Q. When a constraint matrix is supplied, the run additionally
    tracks the best state whose constraint energy is exactly zero and reports
    that one; otherwise the globally best state is reported."""
    cfg = resolve_da_config(Q, config)
    m = Q.size
    S = Q.dense_symmetric()
    diag = np.ascontiguousarray(np.diagonal(S)).astype(np.float64)
    track_g = constraint is not None
    if track_g:
        if constraint.size != m:
            raise ValueError("constraint size mismatch")
        Sg = constraint.dense_symmetric()
        diag_g = np.ascontiguousarray(np.diagonal(Sg)).astype(np.float64)
        g_offset = constraint.offset
    else:
        Sg = np.zeros((1, 1))
        diag_g = np.zeros(1)
        g_offset = 0.0

    par = np.array(
        [
            cfg.initial_temperature,
            cfg.final_temperature,
            cfg.decay_factor,
            float(cfg.temperature_interval),
            cfg.offset_increase_rate,
            float(_restart_threshold(cfg)),
            cfg.target_energy if cfg.target_energy is not None else 0.0,
            1.0 if cfg.target_energy is not None else 0.0,
            1.0 if track_g else 0.0,
            Q.offset,
            g_offset,
        ]
    )

    def builder(seed_seq, eng):
        x = np.zeros(m)
        h = np.zeros(m)
        hg = np.zeros(m if track_g else 1)
        best_x = np.zeros(m)
        bestf_x = np.zeros(m)
        st = np.zeros(12)
        st[5] = st[6] = np.inf
        st[9] = 1.0
        arrays = {"best_x": best_x, "bestf_x": bestf_x}
        if eng == "numba":
            rec = np.zeros(m, dtype=np.int64)
            _seed_kernel(int(seed_seq.generate_state(1)[0]))

            def run_chunk(n_iters):
                return _da_chunk(
                    S, diag, Sg, diag_g, x, h, hg, rec, st, par, best_x, bestf_x, n_iters
                )

        else:
            rng = np.random.default_rng(seed_seq)

            def run_chunk(n_iters):
                return _da_chunk_numpy(
                    S, diag, Sg, diag_g, x, h, hg, st, par, best_x, bestf_x, n_iters, rng
                )

        return run_chunk, st, arrays

    out = _run_attempts(builder, cfg, engine, m, trace)

    if track_g and out["found_feasible"]:
        state = out["bestf_x"].astype(np.int8)
        decoded = decoder.decode(state) if decoder is not None else None
        return RunResult(
            best_energy=out["bestf_e"],
            best_state=state,
            decoded=decoded,
            feasible=True,
            time_to_best=out["time_bestf"],
            attempts_completed=out["attempts_completed"],
            iterations=out["iterations"],
            applied_flips=out["applied_flips"],
            restarts=out["restarts"],
            energy_trace=out["energy_trace"],
        )
    state = out["best_x"].astype(np.int8) if out["best_x"] is not None else np.zeros(m, np.int8)
    feasible = not track_g
    decoded = decoder.decode(state) if (decoder is not None and feasible) else None
    return RunResult(
        best_energy=out["best_e"],
        best_state=state,
        decoded=decoded,
        feasible=feasible,
        time_to_best=out["time_best"],
        attempts_completed=out["attempts_completed"],
        iterations=out["iterations"],
        applied_flips=out["applied_flips"],
        restarts=out["restarts"],
        energy_trace=out["energy_trace"],
    )


def anneal_with_inequalities(
    C: QuboMatrix,
    inst: MkpInstance,
    config: DaConfig,
    engine: str = "auto",
    trace: bool = False,
) -> RunResult:
    """Anneal over item bits only, never recording a flip that would overload
    any capacity. Search starts from (and restarts into) feasible states, so
    every reported state is feasible."""
    if C.size != inst.n:
        raise ValueError("cost matrix must cover exactly the item bits")
    cfg = resolve_da_config(C, config)
    n = inst.n
    S = C.dense_symmetric()
    diag = np.ascontiguousarray(np.diagonal(S)).astype(np.float64)
    weights_t = np.ascontiguousarray(inst.weights.T).astype(np.float64)
    caps = inst.capacities.astype(np.float64)

    par = np.array(
        [
            cfg.initial_temperature,
            cfg.final_temperature,
            cfg.decay_factor,
            float(cfg.temperature_interval),
            cfg.offset_increase_rate,
            float(_restart_threshold(cfg)),
            cfg.target_energy if cfg.target_energy is not None else 0.0,
            1.0 if cfg.target_energy is not None else 0.0,
            0.0,
            C.offset,
            0.0,
        ]
    )

    def builder(seed_seq, eng):
        x = np.zeros(n)
        h = np.zeros(n)
        loads = np.zeros(len(caps))
        best_x = np.zeros(n)
        st = np.zeros(12)
        st[5] = st[6] = np.inf
        st[9] = 1.0
        arrays = {"best_x": best_x, "bestf_x": best_x}
        if eng == "numba":
            rec = np.zeros(n, dtype=np.int64)
            _seed_kernel(int(seed_seq.generate_state(1)[0]))

            def run_chunk(n_iters):
                return _ineq_chunk(
                    S, diag, weights_t, caps, loads, x, h, rec, st, par, best_x, n_iters
                )

        else:
            rng = np.random.default_rng(seed_seq)

            def run_chunk(n_iters):
                return _ineq_chunk_numpy(
                    S, diag, weights_t, caps, loads, x, h, st, par, best_x, n_iters, rng
                )

        return run_chunk, st, arrays

    out = _run_attempts(builder, cfg, engine, n, trace)
    state = out["best_x"].astype(np.int8) if out["best_x"] is not None else np.zeros(n, np.int8)
    return RunResult(
        best_energy=out["best_e"],
        best_state=state,
        decoded=state.astype(np.int64),
        feasible=True,
        time_to_best=out["time_best"],
        attempts_completed=out["attempts_completed"],
        iterations=out["iterations"],
        applied_flips=out["applied_flips"],
        restarts=out["restarts"],
        energy_trace=out["energy_trace"],
    )
