"""Benchmark instance parsing and the bundled instance catalog.

Three text formats are supported:

- TSPLIB tour files (EUC_2D coordinates or explicit distance matrices),
- QAPLIB assignment files (n, then flow and distance matrices),
- ORLIB-style multi-knapsack files (token stream of one or more instances).

The catalog maps instance names to vendored data files, expected QUBO sizes,
known optima, and tuned solver parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

__all__ = [
    "MkpInstance",
    "QapInstance",
    "TspInstance",
    "InstanceDescriptor",
    "ParseError",
    "parse_tsplib",
    "parse_qaplib",
    "parse_orlib_mknap",
    "load_catalog",
    "load_instance",
]


class ParseError(ValueError):
    """Raised when an instance file does not match its declared format."""


@dataclass(frozen=True)
class MkpInstance:
    """Multi-dimensional knapsack: n items, K capacity constraints.

    weights has shape (n, K): weights[i, k] is item i's demand on resource k.
    """

    n: int
    profits: np.ndarray
    weights: np.ndarray
    capacities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "profits", np.asarray(self.profits, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.int64))
        object.__setattr__(self, "capacities", np.asarray(self.capacities, dtype=np.int64))
        if self.profits.shape != (self.n,):
            raise ValueError("profits length must equal n")
        if self.weights.shape != (self.n, self.num_constraints):
            raise ValueError("weights must have shape (n, K)")
        if not (self.profits > 0).all():
            raise ValueError("profits must be positive")
        if (self.weights < 0).any():
            raise ValueError("weights must be nonnegative")
        if not (self.capacities >= 1).all():
            raise ValueError("capacities must be at least 1")

    @property
    def num_constraints(self) -> int:
        return len(self.capacities)


@dataclass(frozen=True)
class QapInstance:
    """Quadratic assignment: n facilities/locations, flow and distance matrices."""

    n: int
    flow: np.ndarray
    distance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "flow", np.asarray(self.flow, dtype=np.int64))
        object.__setattr__(self, "distance", np.asarray(self.distance, dtype=np.int64))
        for name, mat in (("flow", self.flow), ("distance", self.distance)):
            if mat.shape != (self.n, self.n):
                raise ValueError(f"{name} matrix must be {self.n}x{self.n}")


@dataclass(frozen=True)
class TspInstance:
    """Travelling salesman: full (possibly asymmetric) distance matrix."""

    n_cities: int
    distance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "distance", np.asarray(self.distance, dtype=np.int64))
        if self.distance.shape != (self.n_cities, self.n_cities):
            raise ValueError("distance matrix shape mismatch")
        if np.diagonal(self.distance).any():
            raise ValueError("distance diagonal must be zero")
        if (self.distance < 0).any():
            raise ValueError("distances must be nonnegative")


@dataclass(frozen=True)
class InstanceDescriptor:
    """Catalog row: where an instance lives and what is known about it."""

    name: str
    family: str  # MKP | QAP | TSP
    n: int
    qubo_size: int
    optimum: int | None = None
    path: str = ""
    n_cities: int | None = None
    ga_params: dict = field(default_factory=dict)
    da_params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# TSPLIB


def _tsplib_sections(text: str):
    """Split a TSPLIB file into header key/values and data sections."""
    header: dict[str, str] = {}
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line == "EOF":
            continue
        if ":" in line:
            key, _, value = line.partition(":")
            key = key.strip().upper()
            if key and all(c.isalpha() or c == "_" for c in key):
                header[key] = value.strip()
                current = None
                continue
        word = line.split()[0].upper()
        if word.endswith("_SECTION"):
            current = word
            sections[current] = []
            rest = line[len(word):].strip()
            if rest:
                sections[current].append(rest)
            continue
        if current is None:
            raise ParseError(f"unexpected line outside any section: {line!r}")
        sections[current].append(line)
    return header, sections


def _euc_2d_matrix(coords: np.ndarray) -> np.ndarray:
    dx = coords[:, 0][:, None] - coords[:, 0][None, :]
    dy = coords[:, 1][:, None] - coords[:, 1][None, :]
    # nearest-integer rounding of the Euclidean length, the TSPLIB convention
    return np.floor(np.sqrt(dx * dx + dy * dy) + 0.5).astype(np.int64)


def _explicit_matrix(fmt: str, values: list[int], n: int) -> np.ndarray:
    d = np.zeros((n, n), dtype=np.int64)
    if fmt == "FULL_MATRIX":
        expected = n * n
        if len(values) != expected:
            raise ParseError(
                f"EDGE_WEIGHT_SECTION: expected {expected} values for FULL_MATRIX, got {len(values)}"
            )
        d[:] = np.array(values, dtype=np.int64).reshape(n, n)
        return d
    if fmt == "UPPER_ROW":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif fmt == "UPPER_DIAG_ROW":
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
    elif fmt == "LOWER_DIAG_ROW":
        pairs = [(i, j) for i in range(n) for j in range(0, i + 1)]
    else:
        raise ParseError(f"EDGE_WEIGHT_FORMAT: unsupported format {fmt!r}")
    if len(values) != len(pairs):
        raise ParseError(
            f"EDGE_WEIGHT_SECTION: expected {len(pairs)} values for {fmt}, got {len(values)}"
        )
    for (i, j), v in zip(pairs, values):
        d[i, j] = v
        d[j, i] = v
    return d


def parse_tsplib(text: str) -> TspInstance:
    header, sections = _tsplib_sections(text)
    problem_type = header.get("TYPE", "").split()[0] if header.get("TYPE") else ""
    if problem_type and problem_type != "TSP":
        raise ParseError(f"TYPE: expected TSP, got {problem_type!r}")
    try:
        n = int(header["DIMENSION"])
    except KeyError:
        raise ParseError("DIMENSION: missing") from None
    weight_type = header.get("EDGE_WEIGHT_TYPE", "").upper()

    if weight_type == "EUC_2D":
        rows = sections.get("NODE_COORD_SECTION")
        if rows is None:
            raise ParseError("NODE_COORD_SECTION: missing for EUC_2D")
        tokens = " ".join(rows).split()
        if len(tokens) != 3 * n:
            raise ParseError(
                f"NODE_COORD_SECTION: expected {3 * n} tokens, got {len(tokens)}"
            )
        coords = np.array([float(t) for t in tokens], dtype=float).reshape(n, 3)[:, 1:]
        return TspInstance(n_cities=n, distance=_euc_2d_matrix(coords))

    if weight_type == "EXPLICIT":
        rows = sections.get("EDGE_WEIGHT_SECTION")
        if rows is None:
            raise ParseError("EDGE_WEIGHT_SECTION: missing for EXPLICIT")
        fmt = header.get("EDGE_WEIGHT_FORMAT", "").upper()
        try:
            values = [int(t) for t in " ".join(rows).split()]
        except ValueError as exc:
            raise ParseError(f"EDGE_WEIGHT_SECTION: non-integer token ({exc})") from None
        return TspInstance(n_cities=n, distance=_explicit_matrix(fmt, values, n))

    raise ParseError(f"EDGE_WEIGHT_TYPE: unsupported type {weight_type!r}")


# ---------------------------------------------------------------------------
# QAPLIB


def parse_qaplib(text: str) -> QapInstance:
    try:
        tokens = [int(t) for t in text.split()]
    except ValueError as exc:
        raise ParseError(f"non-integer token ({exc})") from None
    if not tokens:
        raise ParseError("empty file")
    n = tokens[0]
    if n <= 0:
        raise ParseError(f"dimension must be positive, got {n}")
    needed = 1 + 2 * n * n
    if len(tokens) < needed:
        raise ParseError(f"expected {needed} tokens for n={n}, got {len(tokens)}")
    if len(tokens) > needed:
        raise ParseError(f"trailing tokens: expected {needed}, got {len(tokens)}")
    flow = np.array(tokens[1 : 1 + n * n], dtype=np.int64).reshape(n, n)
    distance = np.array(tokens[1 + n * n : needed], dtype=np.int64).reshape(n, n)
    return QapInstance(n=n, flow=flow, distance=distance)


# ---------------------------------------------------------------------------
# ORLIB multi-knapsack


def _numeric_lines(text: str) -> list[int]:
    """Token stream of all-numeric lines; prose lines are ignored wholesale."""
    tokens: list[int] = []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        try:
            values = [int(p) for p in parts]
        except ValueError:
            continue
        tokens.extend(values)
    return tokens


def _try_parse_mknap(tokens: list[int], pos: int, with_optimum: bool):
    """Parse one instance at tokens[pos:]; returns (instance, next_pos) or None."""
    if pos + 2 > len(tokens):
        return None
    k, n = tokens[pos], tokens[pos + 1]
    if k <= 0 or n <= 0:
        return None
    cursor = pos + 2
    if with_optimum:
        cursor += 1
    needed = n + k * n + k
    if cursor + needed > len(tokens):
        return None
    profits = tokens[cursor : cursor + n]
    cursor += n
    weights_kn = [tokens[cursor + r * n : cursor + (r + 1) * n] for r in range(k)]
    cursor += k * n
    capacities = tokens[cursor : cursor + k]
    cursor += k
    if any(c < 0 for c in capacities):
        raise ParseError(f"negative capacity in {capacities}")
    try:
        inst = MkpInstance(
            n=n,
            profits=np.array(profits, dtype=np.int64),
            weights=np.array(weights_kn, dtype=np.int64).T,
            capacities=np.array(capacities, dtype=np.int64),
        )
    except ValueError:
        return None
    return inst, cursor


def _parse_mknap_stream(tokens: list[int], pos: int) -> list[MkpInstance] | None:
    """Backtracking parse of the remaining stream; the optimum token is optional
    per instance, so both readings are tried until the whole stream consumes."""
    if pos == len(tokens):
        return []
    for with_optimum in (True, False):
        try:
            head = _try_parse_mknap(tokens, pos, with_optimum)
        except ParseError:
            raise
        if head is None:
            continue
        inst, nxt = head
        rest = _parse_mknap_stream(tokens, nxt)
        if rest is not None:
            return [inst] + rest
    return None


def parse_orlib_mknap(text: str) -> list[MkpInstance]:
    tokens = _numeric_lines(text)
    if not tokens:
        raise ParseError("no numeric data found")
    instances = _parse_mknap_stream(tokens, 0)
    if instances is None:
        raise ParseError("token stream does not form a sequence of knapsack instances")
    if not instances:
        raise ParseError("no instances found")
    return instances


# ---------------------------------------------------------------------------
# Catalog


def _data_root():
    return resources.files("qubobench").joinpath("data")


def load_catalog() -> dict[str, InstanceDescriptor]:
    raw = json.loads(_data_root().joinpath("catalog.json").read_text())
    catalog = {}
    for name, row in raw.items():
        da = row.get("da", "default")
        catalog[name] = InstanceDescriptor(
            name=name,
            family=row["family"].upper(),
            n=row["n"],
            qubo_size=row["qubo_size"],
            optimum=row.get("optimum"),
            path=row["path"],
            n_cities=row.get("n_cities"),
            ga_params=dict(row.get("ga", {})),
            da_params={} if da == "default" else dict(da),
        )
    return catalog


def load_instance(name: str):
    """Return (descriptor, parsed instance) for a catalog entry."""
    catalog = load_catalog()
    if name not in catalog:
        raise KeyError(f"unknown instance {name!r}; known: {sorted(catalog)}")
    desc = catalog[name]
    text = _data_root().joinpath(desc.path).read_text()
    if desc.family == "MKP":
        parsed = parse_orlib_mknap(text)
        if len(parsed) != 1:
            raise ParseError(f"{desc.path}: expected a single instance, got {len(parsed)}")
        inst = parsed[0]
        if inst.n != desc.n:
            raise ParseError(f"{name}: size {inst.n} does not match catalog {desc.n}")
        return desc, inst
    if desc.family == "QAP":
        inst = parse_qaplib(text)
        if inst.n != desc.n:
            raise ParseError(f"{name}: size {inst.n} does not match catalog {desc.n}")
        return desc, inst
    if desc.family == "TSP":
        inst = parse_tsplib(text)
        if inst.n_cities != desc.n_cities:
            raise ParseError(
                f"{name}: {inst.n_cities} cities does not match catalog {desc.n_cities}"
            )
        return desc, inst
    raise ParseError(f"{name}: unknown family {desc.family!r}")
