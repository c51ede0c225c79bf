"""Static structure of a quasi cellular net.

A net is a set of equal-radius circular cells. Two cells are neighbors when
their centers are at most ``2R`` apart, unless an explicit separator pair
suppresses the link. 2D nets are stored as 3D nets with ``z == 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import AmbiguousTarget

# Relative slack on the squared-distance test. Synthesized coordinates are
# computed in floating point, so exactly tangent circles can land a few ulps
# beyond 4R^2.
PREDICATE_RTOL = 1e-12
PROBABILITY_TOL = 1e-9


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def __add__(self, other):
        return Position(self.x + other.dx, self.y + other.dy, self.z + other.dz)

    def as_tuple(self):
        return (self.x, self.y, self.z)

    def dist2(self, other: Position) -> float:
        dx = self.x - other.x
        dy = self.y - other.y
        dz = self.z - other.z
        return dx * dx + dy * dy + dz * dz


@dataclass(frozen=True)
class DirectionVector:
    """Translation to a neighbor cell, taken with probability ``p``."""

    dx: float
    dy: float
    dz: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        for name in ("dx", "dy", "dz", "p"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"direction probability {self.p} outside [0, 1]")
        if self.dx == 0 and self.dy == 0 and self.dz == 0:
            raise ValueError("direction vector must be non-zero")

    @property
    def length(self) -> float:
        return math.sqrt(self.dx * self.dx + self.dy * self.dy + self.dz * self.dz)


# --- generation functions -------------------------------------------------


@dataclass(frozen=True)
class Constant:
    rate: float

    def at(self, step: int) -> float:
        return self.rate


@dataclass(frozen=True)
class Periodic:
    """``amount`` on every step where ``(step - offset) % period == 0``."""

    period: int
    amount: float
    offset: int = 0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be >= 1")

    def at(self, step: int) -> float:
        if step >= self.offset and (step - self.offset) % self.period == 0:
            return self.amount
        return 0


@dataclass(frozen=True)
class Table:
    entries: tuple = ()  # ((step, amount), ...)

    def at(self, step: int) -> float:
        for s, amount in self.entries:
            if s == step:
                return amount
        return 0


GenerationFunction = Constant | Periodic | Table


def _function_amounts(fn) -> Iterable[float]:
    if isinstance(fn, Constant):
        return (fn.rate,)
    if isinstance(fn, Periodic):
        return (fn.amount,)
    return tuple(a for _, a in fn.entries)


# --- cell kinds -----------------------------------------------------------


@dataclass(frozen=True)
class Regular:
    pass


@dataclass(frozen=True)
class Outflow:
    pass


@dataclass(frozen=True)
class Generator:
    function: GenerationFunction
    template: Mapping[str, float] = field(default_factory=dict)
    # When set, each generated token gets this attribute set to a running count.
    serial_key: Optional[str] = None

    def __post_init__(self):
        if any(a < 0 for a in _function_amounts(self.function)):
            raise ValueError("generation amounts must be >= 0")

    def amounts_are_integral(self) -> bool:
        return all(float(a).is_integer() for a in _function_amounts(self.function))


@dataclass(frozen=True)
class Turnstile:
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("turnstile delay tau must be > 0")

    def hold_steps(self, theta: float) -> int:
        """Delay in whole steps, rounded up."""
        return max(1, math.ceil(self.tau / theta - 1e-9))


REGULAR = Regular()
OUTFLOW = Outflow()

CellKind = Regular | Generator | Outflow | Turnstile


@dataclass(frozen=True)
class Cell:
    id: int
    position: Position
    kind: CellKind = REGULAR
    directions: tuple = ()
    payload_schema: tuple = ()

    def probability_sum(self) -> float:
        return math.fsum(d.p for d in self.directions)


# --- predicate and topology -------------------------------------------------


def neighbor_predicate(u: Position, v: Position, R: float) -> bool:
    """True when the circles of radius ``R`` centered at u and v touch or overlap."""
    if not R > 0:
        raise ValueError("radius must be positive")
    return u.dist2(v) <= 4.0 * R * R * (1.0 + PREDICATE_RTOL)


def _coords(cells: Sequence[Cell]) -> np.ndarray:
    if not cells:
        return np.zeros((0, 3))
    return np.array([c.position.as_tuple() for c in cells], dtype=float)


def _normalize_pairs(pairs) -> frozenset:
    out = set()
    for a, b in pairs:
        a, b = int(a), int(b)
        if a != b:
            out.add((min(a, b), max(a, b)))
    return frozenset(out)


def build_adjacency(cells: Sequence[Cell], R: float, separator_pairs=()) -> tuple:
    """Neighbor lists (sorted ids) for every cell.

    Candidate pairs come from a k-d tree query with a slightly inflated
    radius; every candidate is then re-checked with the exact predicate.
    """
    if not R > 0:
        raise ValueError("radius must be positive")
    n = len(cells)
    for i, c in enumerate(cells):
        if c.id != i:
            raise ValueError(f"cell ids must be dense and ordered; got {c.id} at {i}")
    sep = _normalize_pairs(separator_pairs)
    adj = [[] for _ in range(n)]
    if n < 2:
        return tuple(tuple(a) for a in adj)
    xyz = _coords(cells)
    tree = cKDTree(xyz)
    pairs = tree.query_pairs(r=2.0 * R * (1.0 + 1e-9), output_type="ndarray")
    if len(pairs):
        d = xyz[pairs[:, 0]] - xyz[pairs[:, 1]]
        d2 = np.einsum("ij,ij->i", d, d)
        pairs = pairs[d2 <= 4.0 * R * R * (1.0 + PREDICATE_RTOL)]
    for a, b in pairs.tolist():
        key = (a, b) if a < b else (b, a)
        if key in sep:
            continue
        adj[a].append(b)
        adj[b].append(a)
    return tuple(tuple(sorted(a)) for a in adj)


def resolve_directed_successors(cells: Sequence[Cell], adjacency, position_tolerance: float) -> tuple:
    """Map each direction of each cell to the neighbor it points at.

    Returns one tuple per cell aligned with ``cell.directions``; an entry is
    the target id or ``None`` when no neighbor lies within tolerance of the
    translated point (a dangling direction).
    """
    tol2 = position_tolerance * position_tolerance
    out = []
    for c in cells:
        targets = []
        for d in c.directions:
            target = c.position + d
            hits = [v for v in adjacency[c.id] if cells[v].position.dist2(target) <= tol2]
            if len(hits) > 1:
                raise AmbiguousTarget(
                    f"cell {c.id}: direction ({d.dx}, {d.dy}, {d.dz}) matches cells {hits}"
                )
            targets.append(hits[0] if hits else None)
        out.append(tuple(targets))
    return tuple(out)


@dataclass(frozen=True)
class NetTopology:
    """Immutable net: cells, radius, separators and derived neighbor data.

    ``adjacency`` and ``successors`` are computed on construction and do not
    take part in equality.
    """

    radius: float
    cells: tuple
    separator_pairs: frozenset = frozenset()
    position_tolerance: Optional[float] = None
    adjacency: tuple = field(default=(), compare=False, repr=False)
    successors: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "separator_pairs", _normalize_pairs(self.separator_pairs))
        if self.position_tolerance is None:
            object.__setattr__(self, "position_tolerance", self.radius / 100.0)
        adj = build_adjacency(self.cells, self.radius, self.separator_pairs)
        object.__setattr__(self, "adjacency", adj)
        succ = resolve_directed_successors(self.cells, adj, self.position_tolerance)
        object.__setattr__(self, "successors", succ)

    def __len__(self):
        return len(self.cells)

    @property
    def dangling(self) -> list:
        """(cell id, direction index) for every direction without a target."""
        return [
            (u, k)
            for u, targets in enumerate(self.successors)
            for k, v in enumerate(targets)
            if v is None
        ]

    def cells_of_kind(self, kind_type) -> list:
        return [c.id for c in self.cells if isinstance(c.kind, kind_type)]

    def with_kinds(self, kinds: Mapping[int, CellKind]) -> NetTopology:
        cells = [
            Cell(c.id, c.position, kinds.get(c.id, c.kind), c.directions, c.payload_schema)
            for c in self.cells
        ]
        return NetTopology(self.radius, cells, self.separator_pairs, self.position_tolerance)


@dataclass
class ValidationReport:
    isolated: list = field(default_factory=list)
    probability_violations: list = field(default_factory=list)  # (cell id, sum)
    dangling: list = field(default_factory=list)  # (cell id, direction index)
    duplicate_positions: list = field(default_factory=list)  # (cell id, cell id)

    @property
    def valid(self) -> bool:
        return not self.isolated and not self.probability_violations

    def lines(self) -> list:
        out = []
        for u in self.isolated:
            out.append(f"error: cell {u} has no neighbor")
        for u, s in self.probability_violations:
            out.append(f"error: cell {u} direction probabilities sum to {s!r}")
        for u, k in self.dangling:
            out.append(f"warning: cell {u} direction {k} has no target cell")
        for a, b in self.duplicate_positions:
            out.append(f"warning: cells {a} and {b} share a position")
        return out

    def summary(self) -> str:
        status = "valid" if self.valid else "invalid"
        return (
            f"{status}: {len(self.isolated)} isolated, "
            f"{len(self.probability_violations)} probability violations, "
            f"{len(self.dangling)} dangling directions, "
            f"{len(self.duplicate_positions)} duplicate positions"
        )


def validate_static_structure(net: NetTopology) -> ValidationReport:
    report = ValidationReport()
    for c in net.cells:
        if not net.adjacency[c.id]:
            report.isolated.append(c.id)
        if c.directions:
            s = c.probability_sum()
            if abs(s - 1.0) > PROBABILITY_TOL:
                report.probability_violations.append((c.id, s))
    report.dangling = net.dangling
    if len(net.cells) > 1:
        tree = cKDTree(_coords(net.cells))
        pairs = tree.query_pairs(r=net.position_tolerance, output_type="ndarray")
        report.duplicate_positions = sorted(tuple(p) for p in pairs.tolist())
    return report
