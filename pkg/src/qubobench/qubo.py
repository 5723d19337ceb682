"""QUBO representation, energy evaluation, and incremental flip deltas.

A QUBO is minimised over binary vectors x:

    E(x) = sum_{i <= j} Q[i, j] * x_i * x_j + offset

Coefficients are stored upper-triangular. The effective-field cache makes the
energy change of any single bit flip readable in constant time and updatable
in O(m) after a flip is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuboMatrix",
    "FieldCache",
    "energy",
    "init_fields",
    "delta_energy",
    "apply_flip",
    "aggregate",
    "read_qubo_file",
    "write_qubo_file",
]


class QuboFormatError(ValueError):
    """Raised for malformed QUBO files."""


@dataclass
class QuboMatrix:
    """Upper-triangular quadratic form plus a constant offset.

    entries maps (i, j) with i <= j to a finite coefficient; absent pairs are
    exactly zero. Instances are treated as immutable once built.
    """

    size: int
    entries: dict[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"size must be positive, got {self.size}")
        for (i, j), v in self.entries.items():
            if not (0 <= i <= j < self.size):
                raise ValueError(f"index pair {(i, j)} out of range for size {self.size}")
            if not math.isfinite(v):
                raise ValueError(f"non-finite coefficient at {(i, j)}")
        if not math.isfinite(self.offset):
            raise ValueError("non-finite offset")
        self._sym = None

    def dense_symmetric(self) -> np.ndarray:
        """S with S[i, j] = S[j, i] = entry(i, j) for i != j and S[j, j] = entry(j, j).

        Under this folding, h_j = S[j, j] + sum_{i != j} S[i, j] * x_i is the
        energy change of setting bit j to 1 with the rest of x fixed.
        """
        if self._sym is None:
            S = np.zeros((self.size, self.size))
            for (i, j), v in self.entries.items():
                if i == j:
                    S[i, i] = v
                else:
                    S[i, j] += v
                    S[j, i] += v
            self._sym = S
        return self._sym

    def upper_dense(self) -> np.ndarray:
        U = np.zeros((self.size, self.size))
        for (i, j), v in self.entries.items():
            U[i, j] = v
        return U


@dataclass
class FieldCache:
    """Per-variable effective fields h, kept consistent with a binary state."""

    fields: np.ndarray
    sym: np.ndarray


def _check_state(Q: QuboMatrix, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (Q.size,):
        raise ValueError(f"state length {x.shape} does not match QUBO size {Q.size}")
    return x


def energy(Q: QuboMatrix, x) -> float:
    """Exact upper-triangular energy sum_{i<=j} Q[i,j] x_i x_j + offset."""
    x = _check_state(Q, x)
    total = Q.offset
    for (i, j), v in Q.entries.items():
        if x[i] and x[j]:
            total += v
    return total


def energy_dense(U: np.ndarray, offset: float, x: np.ndarray) -> float:
    """Same as energy() for a dense upper-triangular array (solver hot path)."""
    return float(x @ U @ x) + offset


def init_fields(Q: QuboMatrix, x) -> FieldCache:
    """Build the field cache: h_j = S_jj + sum_{i != j} S_ij x_i."""
    x = _check_state(Q, x)
    S = Q.dense_symmetric()
    diag = np.diag(S)
    h = S @ x + diag * (1 - x)
    return FieldCache(fields=h.astype(float), sym=S)


def delta_energy(x, cache: FieldCache, j: int) -> float:
    """Energy change of flipping bit j: (1 - 2 x_j) * h_j."""
    if not 0 <= j < len(cache.fields):
        raise IndexError(f"bit index {j} out of range")
    return (1 - 2 * x[j]) * cache.fields[j]


def apply_flip(x, cache: FieldCache, j: int) -> None:
    """Toggle bit j and update every other field by +-S_ij.

    h_j itself does not depend on x_j, so fields[j] is left unchanged; the
    sign of its delta flips through the (1 - 2 x_j) factor.
    """
    if not 0 <= j < len(cache.fields):
        raise IndexError(f"bit index {j} out of range")
    sign = 1 - 2 * x[j]  # +1 when turning the bit on
    col = cache.sym[:, j]
    cache.fields += sign * col
    cache.fields[j] -= sign * col[j]
    x[j] = 1 - x[j]


def aggregate(C: QuboMatrix, G: QuboMatrix, alpha: float) -> QuboMatrix:
    """Weighted aggregate Q = C + alpha * G, entrywise, offsets included."""
    if C.size != G.size:
        raise ValueError(f"size mismatch: {C.size} vs {G.size}")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    merged = dict(C.entries)
    for key, v in G.entries.items():
        merged[key] = merged.get(key, 0.0) + alpha * v
    merged = {k: v for k, v in merged.items() if v != 0.0}
    return QuboMatrix(size=C.size, entries=merged, offset=C.offset + alpha * G.offset)


def write_qubo_file(Q: QuboMatrix, path) -> None:
    """Write `m q` then one `i j v` line per entry; repr keeps floats exact."""
    with open(path, "w") as fh:
        fh.write(f"{Q.size} {Q.offset!r}\n")
        for (i, j) in sorted(Q.entries):
            fh.write(f"{i} {j} {Q.entries[(i, j)]!r}\n")


def read_qubo_file(path) -> QuboMatrix:
    entries: dict[tuple[int, int], float] = {}
    size = None
    offset = 0.0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if size is None:
                if len(parts) != 2:
                    raise QuboFormatError(f"line {lineno}: expected `size offset` header")
                size = int(parts[0])
                offset = float(parts[1])
                if size <= 0:
                    raise QuboFormatError(f"line {lineno}: nonpositive size")
                continue
            if len(parts) != 3:
                raise QuboFormatError(f"line {lineno}: expected `i j v`")
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            if not 0 <= i <= j < size:
                raise QuboFormatError(f"line {lineno}: index pair ({i}, {j}) out of range")
            if not math.isfinite(v):
                raise QuboFormatError(f"line {lineno}: non-finite value")
            if (i, j) in entries:
                raise QuboFormatError(f"line {lineno}: duplicate entry ({i}, {j})")
            entries[(i, j)] = v
    if size is None:
        raise QuboFormatError("empty file: missing header")
    return QuboMatrix(size=size, entries=entries, offset=offset)
