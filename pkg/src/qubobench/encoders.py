"""QUBO encodings for the three problem families.

Each encoder returns an EncodedProblem holding a cost matrix C, a constraint
matrix G, a penalty weight alpha, and a decoder back to the natural
representation. Minimising C + alpha*G over binary states solves the original
problem; G evaluates to exactly 0 on states that decode to feasible solutions.

Knapsack inequalities are absorbed by binary slack ladders. Two ladder layouts
are available: "padded" (the default) widens every constraint to a shared
power-of-two range with a shifted load and a top-bit uniqueness term; "compact"
uses the minimal ladder whose reachable sums are exactly {0..W_k}.

Permutation problems use the two-way one-hot encoding: an n x n bit matrix
whose rows are positions/facilities and columns are cities/locations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instances import MkpInstance, QapInstance, TspInstance
from .qubo import QuboMatrix

__all__ = [
    "Permutation",
    "SlackLayout",
    "EncodedProblem",
    "MkpSlackDecoder",
    "OneHotDecoder",
    "mkp_objective",
    "mkp_feasible",
    "mkp_encode_slack",
    "permutation_encode",
    "permutation_decode",
    "permutation_penalty_value",
    "qap_objective",
    "qap_encode",
    "tsp_objective",
    "tsp_encode",
    "tour_starting_at_first_city",
    "penalty_weight",
]


class EncodingError(ValueError):
    """Raised when an instance cannot be encoded."""


@dataclass(frozen=True)
class Permutation:
    """Vector of length n containing each value 1..n exactly once."""

    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        object.__setattr__(self, "order", order)
        n = len(order)
        if n == 0 or not np.array_equal(np.sort(order), np.arange(1, n + 1)):
            raise ValueError(f"not a permutation of 1..{n}: {order}")

    def __len__(self):
        return len(self.order)


def _as_order(perm) -> np.ndarray:
    if isinstance(perm, Permutation):
        return perm.order
    return Permutation(np.asarray(perm)).order


@dataclass(frozen=True)
class SlackLayout:
    """Slack-bit bookkeeping for one knapsack encoding.

    coefficients[k] lists constraint k's slack-bit values in bit order;
    shifts[k] is the constant added to the load inside the squared penalty
    (zero for the compact scheme); offsets[k] is the first bit index of
    constraint k's slack block within the encoded vector.
    """

    scheme: str
    coefficients: tuple[tuple[int, ...], ...]
    shifts: tuple[int, ...]
    offsets: tuple[int, ...]

    @property
    def total_bits(self) -> int:
        return sum(len(c) for c in self.coefficients)


@dataclass(frozen=True)
class MkpSlackDecoder:
    n_items: int
    layout: SlackLayout

    def decode(self, x) -> np.ndarray:
        x = np.asarray(x)
        return x[: self.n_items].astype(np.int64)

    def describe(self) -> dict:
        return {
            "kind": "item_bits_plus_slack",
            "n_items": self.n_items,
            "scheme": self.layout.scheme,
            "slack_coefficients": [list(c) for c in self.layout.coefficients],
            "slack_shifts": list(self.layout.shifts),
        }


@dataclass(frozen=True)
class OneHotDecoder:
    """Row-major n x n one-hot matrix; row = position/facility, column = value.

    With fixed_first_city set, decoded permutations are expanded to full tours
    beginning at city 1 (columns then stand for cities 2..n+1).
    """

    n: int
    fixed_first_city: bool = False

    def decode(self, x):
        perm = permutation_decode(x, self.n)
        if perm is None:
            return None
        if not self.fixed_first_city:
            return perm
        return Permutation(np.concatenate(([1], perm.order + 1)))

    def describe(self) -> dict:
        return {
            "kind": "two_way_one_hot",
            "n": self.n,
            "fixed_first_city": self.fixed_first_city,
        }


@dataclass(frozen=True)
class EncodedProblem:
    cost: QuboMatrix
    constraint: QuboMatrix
    alpha: float
    decoder: object

    def __post_init__(self):
        if self.cost.size != self.constraint.size:
            raise ValueError("cost and constraint sizes differ")

    @property
    def size(self) -> int:
        return self.cost.size


def _qubo_from_arrays(size, rows, cols, vals, offset=0.0) -> QuboMatrix:
    """Bulk-build an upper-triangular QuboMatrix, dropping exact zeros."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    keep = vals != 0.0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    if (rows > cols).any():
        raise ValueError("lower-triangular index produced")
    entries = {}
    for key, v in zip(zip(rows.tolist(), cols.tolist()), vals.tolist()):
        entries[key] = entries.get(key, 0.0) + v
    entries = {k: v for k, v in entries.items() if v != 0.0}
    return QuboMatrix(size=size, entries=entries, offset=float(offset))


# ---------------------------------------------------------------------------
# MKP


def mkp_objective(inst: MkpInstance, x) -> int:
    """Negated total profit of the selected items (minimisation form)."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (inst.n,):
        raise ValueError(f"selection length {x.shape} does not match n={inst.n}")
    return int(-(inst.profits @ x))


def mkp_feasible(inst: MkpInstance, x) -> bool:
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (inst.n,):
        raise ValueError(f"selection length {x.shape} does not match n={inst.n}")
    loads = x @ inst.weights
    return bool((loads <= inst.capacities).all())


def _padded_width(inst: MkpInstance) -> int:
    """Shared ladder width: wide enough that every constraint's shifted load,
    feasible or not, lands inside the double-width slack range."""
    width = 0
    for k in range(inst.num_constraints):
        cap = int(inst.capacities[k])
        total = int(inst.weights[:, k].sum())
        need = max(cap, max(1, total - cap + 1))
        width = max(width, int(math.ceil(math.log2(need))) if need > 1 else 0)
    if width > 62:
        raise EncodingError("capacity range too wide for 64-bit slack ladders")
    return width


def _slack_layout(inst: MkpInstance, scheme: str) -> SlackLayout:
    coefficients = []
    shifts = []
    offsets = []
    cursor = inst.n
    if scheme == "padded":
        width = _padded_width(inst)
        for k in range(inst.num_constraints):
            coeffs = tuple(2**j for j in range(width, -1, -1))
            coefficients.append(coeffs)
            shifts.append(2**width - int(inst.capacities[k]))
            offsets.append(cursor)
            cursor += len(coeffs)
    elif scheme == "compact":
        for k in range(inst.num_constraints):
            cap = int(inst.capacities[k])
            m_k = int(math.floor(math.log2(cap)))
            coeffs = tuple(2**j for j in range(m_k)) + (cap + 1 - 2**m_k,)
            coefficients.append(coeffs)
            shifts.append(0)
            offsets.append(cursor)
            cursor += len(coeffs)
    else:
        raise EncodingError(f"unknown slack scheme {scheme!r}")
    return SlackLayout(
        scheme=scheme,
        coefficients=tuple(coefficients),
        shifts=tuple(shifts),
        offsets=tuple(offsets),
    )


def mkp_encode_slack(inst: MkpInstance, scheme: str = "padded") -> EncodedProblem:
    """Encode profits as negated diagonal cost and capacities as squared
    slack-ladder penalties.

    Per constraint the penalty is (load + shift - s)^2 where s is the slack
    ladder sum; the padded scheme adds a_j * z_top * z_j terms that forbid
    combining the top ladder bit with lower bits, pinning the penalty-free
    slack range to {0..2^width}.
    """
    if (inst.capacities < 1).any():
        raise EncodingError("capacities must be at least 1")
    layout = _slack_layout(inst, scheme)
    size = inst.n + layout.total_bits

    cost = _qubo_from_arrays(
        size, np.arange(inst.n), np.arange(inst.n), -inst.profits.astype(np.float64)
    )

    rows, cols, vals = [], [], []
    offset = 0
    for k in range(inst.num_constraints):
        w = inst.weights[:, k].astype(np.int64)
        a = np.array(layout.coefficients[k], dtype=np.int64)
        shift = layout.shifts[k]
        base = layout.offsets[k]
        ns = len(a)

        offset += shift * shift
        # (load + shift - s)^2 expanded over item bits and slack bits
        rows.append(np.arange(inst.n))
        cols.append(np.arange(inst.n))
        vals.append(w * w + 2 * shift * w)
        ii, jj = np.triu_indices(inst.n, 1)
        rows.append(ii)
        cols.append(jj)
        vals.append(2 * w[ii] * w[jj])
        rows.append(base + np.arange(ns))
        cols.append(base + np.arange(ns))
        vals.append(a * a - 2 * shift * a)
        si, sj = np.triu_indices(ns, 1)
        rows.append(base + si)
        cols.append(base + sj)
        vals.append(2 * a[si] * a[sj])
        gi, gj = np.meshgrid(np.arange(inst.n), base + np.arange(ns), indexing="ij")
        rows.append(gi.ravel())
        cols.append(gj.ravel())
        vals.append((-2 * np.outer(w, a)).ravel())
        if scheme == "padded":
            # top-bit uniqueness: z_top combines with no lower ladder bit
            rows.append(np.full(ns - 1, base))
            cols.append(base + np.arange(1, ns))
            vals.append(a[1:])

    constraint = _qubo_from_arrays(
        size,
        np.concatenate(rows),
        np.concatenate(cols),
        np.concatenate([np.asarray(v, dtype=np.float64) for v in vals]),
        offset=float(offset),
    )
    alpha = penalty_weight(cost)
    return EncodedProblem(
        cost=cost,
        constraint=constraint,
        alpha=alpha,
        decoder=MkpSlackDecoder(n_items=inst.n, layout=layout),
    )


# ---------------------------------------------------------------------------
# Permutations and the two-way one-hot penalty


def permutation_encode(perm) -> np.ndarray:
    order = _as_order(perm)
    n = len(order)
    x = np.zeros(n * n, dtype=np.int8)
    x[np.arange(n) * n + (order - 1)] = 1
    return x


def permutation_decode(x, n: int):
    x = np.asarray(x)
    if x.shape != (n * n,):
        raise ValueError(f"state length {x.shape} does not match n^2={n * n}")
    mat = x.reshape(n, n)
    if (mat.sum(axis=1) != 1).any() or (mat.sum(axis=0) != 1).any():
        return None
    return Permutation(mat.argmax(axis=1) + 1)


def permutation_penalty_value(x, n: int) -> int:
    x = np.asarray(x)
    if x.shape != (n * n,):
        raise ValueError(f"state length {x.shape} does not match n^2={n * n}")
    mat = x.reshape(n, n)
    rows = (1 - mat.sum(axis=1)) ** 2
    cols = (1 - mat.sum(axis=0)) ** 2
    return int(rows.sum() + cols.sum())


def _one_hot_penalty_qubo(n: int) -> QuboMatrix:
    """Quadratic form of sum_rows (1-rowsum)^2 + sum_cols (1-colsum)^2."""
    m = n * n
    cc, cc2 = np.triu_indices(n, 1)
    offs = (np.arange(n) * n)[:, None]
    row_r = (offs + cc).ravel()
    row_c = (offs + cc2).ravel()
    col_r = (cc[:, None] * n + np.arange(n)).ravel()
    col_c = (cc2[:, None] * n + np.arange(n)).ravel()
    diag = np.arange(m)
    rows = np.concatenate([row_r, col_r, diag])
    cols = np.concatenate([row_c, col_c, diag])
    vals = np.concatenate(
        [np.full(row_r.size, 2.0), np.full(col_r.size, 2.0), np.full(m, -2.0)]
    )
    return _qubo_from_arrays(m, rows, cols, vals, offset=2.0 * n)


# ---------------------------------------------------------------------------
# QAP


def qap_objective(inst: QapInstance, perm) -> int:
    order = _as_order(perm)
    if len(order) != inst.n:
        raise ValueError(f"permutation length {len(order)} does not match n={inst.n}")
    idx = order - 1
    return int((inst.flow * inst.distance[np.ix_(idx, idx)]).sum())


def qap_encode(inst: QapInstance) -> EncodedProblem:
    """Facility-pair flows times location-pair distances on one-hot bits."""
    n = inst.n
    full = np.kron(inst.flow, inst.distance).astype(np.float64)
    upper = np.triu(full + full.T, k=1) + np.diag(np.diagonal(full))
    rows, cols = np.nonzero(upper)
    cost = _qubo_from_arrays(n * n, rows, cols, upper[rows, cols])
    constraint = _one_hot_penalty_qubo(n)
    return EncodedProblem(
        cost=cost,
        constraint=constraint,
        alpha=penalty_weight(cost),
        decoder=OneHotDecoder(n=n),
    )


# ---------------------------------------------------------------------------
# TSP


def tsp_objective(inst: TspInstance, perm) -> int:
    order = _as_order(perm)
    if len(order) != inst.n_cities:
        raise ValueError(
            f"tour length {len(order)} does not match n_cities={inst.n_cities}"
        )
    idx = order - 1
    return int(inst.distance[idx, np.roll(idx, -1)].sum())


def tour_starting_at_first_city(perm) -> np.ndarray:
    """Rotate a tour so it begins at city 1 (tour value is rotation-invariant)."""
    order = _as_order(perm)
    start = int(np.flatnonzero(order == 1)[0])
    return np.roll(order, -start)


def tsp_encode(inst: TspInstance) -> EncodedProblem:
    """Fix city 1 and encode positions 1..n-1 over cities 2..n.

    Interior steps contribute d(a, b) between adjacent positions; the first
    and last positions carry the distances to and from the fixed city on
    their diagonal.
    """
    if inst.n_cities < 3:
        raise EncodingError("tours need at least 3 cities")
    n = inst.n_cities - 1
    d = inst.distance
    inner = d[1:, 1:].astype(np.float64)

    k = np.arange(n - 1)
    a = np.arange(n)
    b = np.arange(n)
    kk, aa, bb = np.meshgrid(k, a, b, indexing="ij")
    rows = [(kk * n + aa).ravel()]
    cols = [((kk + 1) * n + bb).ravel()]
    vals = [inner[aa.ravel(), bb.ravel()]]

    first = np.arange(n)
    rows.append(first)
    cols.append(first)
    vals.append(d[0, 1:].astype(np.float64))
    last = (n - 1) * n + np.arange(n)
    rows.append(last)
    cols.append(last)
    vals.append(d[1:, 0].astype(np.float64))

    cost = _qubo_from_arrays(
        n * n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )
    constraint = _one_hot_penalty_qubo(n)
    return EncodedProblem(
        cost=cost,
        constraint=constraint,
        alpha=penalty_weight(cost),
        decoder=OneHotDecoder(n=n, fixed_first_city=True),
    )


def tsp_encode_state(inst: TspInstance, perm) -> np.ndarray:
    """Binary state for a full tour, matching tsp_encode's layout."""
    order = tour_starting_at_first_city(perm)
    if order[0] != 1:
        raise ValueError("tour must contain city 1")
    reduced = Permutation(order[1:] - 1)
    return permutation_encode(reduced)


# ---------------------------------------------------------------------------
# Penalty weight


def penalty_weight(C: QuboMatrix) -> float:
    """Upper bound on any single-flip change of the cost energy.

    Row-wise over the symmetrised matrix: the larger of the maximal energy
    drop and the maximal energy rise a flip of that variable can cause.
    """
    S = C.dense_symmetric()
    diag = np.diagonal(S).copy()
    off = S - np.diag(diag)
    down = -diag - np.minimum(off, 0.0).sum(axis=1)
    up = diag + np.maximum(off, 0.0).sum(axis=1)
    return float(np.maximum(down, up).max())
