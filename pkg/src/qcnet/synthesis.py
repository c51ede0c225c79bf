"""Compile a basic graph (vertices = junctions, edges = straight road
sections) into a quasi cellular net.

Every edge becomes a chain of tangent or overlapping cells. Multiband edges
get parallel rows offset by 2R; adjacent rows are either linked by lateral
lane-change directions or, with a separator, kept apart by explicit
separator pairs. A bidirectional edge adds an opposite carriageway on the
left of the forward one, entered and left through lateral links at the end
vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import (
    DegenerateEdge,
    DuplicateAssignment,
    UnknownCell,
    UnreachableBranch,
)
from .net_core import (
    PROBABILITY_TOL,
    Cell,
    DirectionVector,
    NetTopology,
    Position,
    Regular,
    neighbor_predicate,
)

FORWARD = "forward"
REVERSE = "reverse"


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    lanes: int = 1
    separator: bool = False
    bidirectional: bool = False

    def __post_init__(self):
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise ValueError("lanes must be a positive integer")


@dataclass(frozen=True)
class BranchRule:
    """Split at ``vertex``: ``choices`` is ``((edge index, p), ...)``."""

    vertex: str
    choices: tuple

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple((int(e), float(p)) for e, p in self.choices))
        if any(not 0.0 <= p <= 1.0 for _, p in self.choices):
            raise ValueError(f"branch probabilities at {self.vertex!r} must lie in [0, 1]")
        if abs(math.fsum(p for _, p in self.choices) - 1.0) > PROBABILITY_TOL:
            raise ValueError(f"branch probabilities at {self.vertex!r} must sum to 1")


@dataclass
class BasicGraph:
    vertices: dict = field(default_factory=dict)  # id -> Position, ordered
    edges: list = field(default_factory=list)

    def validate(self):
        for i, e in enumerate(self.edges):
            for v in (e.source, e.target):
                if v not in self.vertices:
                    raise ValueError(f"edge {i} references unknown vertex {v!r}")

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        nbrs = {v: set() for v in self.vertices}
        for e in self.edges:
            nbrs[e.source].add(e.target)
            nbrs[e.target].add(e.source)
        start = next(iter(self.vertices))
        seen, todo = {start}, [start]
        while todo:
            for w in nbrs[todo.pop()]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return len(seen) == len(self.vertices)


def loop_graph(points, **edge_kwargs) -> BasicGraph:
    """Closed polyline through ``points`` (vertex ids ``v0, v1, ...``)."""
    verts = {f"v{i}": Position(*p) for i, p in enumerate(points)}
    ids = list(verts)
    edges = [Edge(ids[i], ids[(i + 1) % len(ids)], **edge_kwargs) for i in range(len(ids))]
    return BasicGraph(verts, edges)


def ring_graph(n: int, R: float) -> BasicGraph:
    """Regular n-gon with side 2R, which synthesizes to exactly n cells."""
    rho = R / math.sin(math.pi / n)
    pts = [(rho * math.cos(2 * math.pi * i / n), rho * math.sin(2 * math.pi * i / n)) for i in range(n)]
    return loop_graph(pts)


# --- edge discretization -----------------------------------------------------


def _vec(a: Position, b: Position):
    return (b.x - a.x, b.y - a.y, b.z - a.z)


def discretize_edge(a: Position, b: Position, R: float) -> list:
    """Cells along segment a-b at spacing ``L / ceil(L / 2R)``.

    Returns ``[(Position, DirectionVector), ...]``, n + 1 entries for n
    intervals; every entry points one spacing toward ``b``.
    """
    if not R > 0:
        raise ValueError("radius must be positive")
    L = math.sqrt(a.dist2(b))
    if L == 0:
        raise DegenerateEdge(f"edge endpoints coincide at {a.as_tuple()}")
    x = L / (2.0 * R)
    n = max(1, math.ceil(x - x * 1e-13))
    vx, vy, vz = _vec(a, b)
    d = DirectionVector(vx / n, vy / n, vz / n)
    out = [(Position(a.x + vx * i / n, a.y + vy * i / n, a.z + vz * i / n), d) for i in range(n)]
    out.append((b, d))
    return out


def _right_normal(a: Position, b: Position):
    vx, vy, _ = _vec(a, b)
    h = math.hypot(vx, vy)
    if h == 0:
        return (1.0, 0.0, 0.0)
    return (vy / h, -vx / h, 0.0)


@dataclass
class MultibandSection:
    """Parallel rows of one carriageway.

    Row 0 spans segment indices ``0..n``; side rows span ``1..n-1`` and are
    only emitted when that leaves at least two cells. Cross-lane pairs are
    ``((row, i), (row', i'))``.
    """

    n: int
    rows: list  # rows[k] = [(Position, DirectionVector), ...]
    first_index: list
    links: list = field(default_factory=list)
    separator_pairs: list = field(default_factory=list)

    def index_range(self, k: int) -> range:
        return range(self.first_index[k], self.first_index[k] + len(self.rows[k]))

    def item(self, k: int, i: int):
        return self.rows[k][i - self.first_index[k]]


def build_multiband(a: Position, b: Position, R: float, lanes: int = 1, separator: bool = False, shift: int = 0) -> MultibandSection:
    """Rows offset to the right of a->b at spacing 2R.

    ``shift`` moves the whole section that many lane widths to the right.
    """
    if lanes < 1:
        raise ValueError("lanes must be >= 1")
    base = discretize_edge(a, b, R)
    n = len(base) - 1
    rx, ry, rz = _right_normal(a, b)
    rows, first = [], []
    for k in range(lanes):
        off = 2.0 * R * (shift + k)
        if k == 0:
            idx = range(0, n + 1)
        elif n >= 3:
            idx = range(1, n)
        else:
            idx = range(0)
        row = []
        for i in idx:
            p, d = base[i]
            if off:
                p = Position(p.x + off * rx, p.y + off * ry, p.z + off * rz)
            row.append((p, d))
        rows.append(row)
        first.append(0 if k == 0 else 1)
    sec = MultibandSection(n, rows, first)
    pairs = []
    for k in range(lanes - 1):
        if not rows[k + 1]:
            continue
        upper = sec.index_range(k + 1)
        for i in sec.index_range(k):
            for j in (i - 1, i, i + 1):
                if j in upper and neighbor_predicate(sec.item(k, i)[0], sec.item(k + 1, j)[0], R):
                    pairs.append(((k, i), (k + 1, j)))
    if separator:
        sec.separator_pairs = pairs
    else:
        sec.links = pairs
    return sec


# --- graph compilation ---------------------------------------------------------


@dataclass
class SynthesisLayout:
    vertex_cells: dict = field(default_factory=dict)  # vertex id -> cell id
    # (edge index, FORWARD | REVERSE) -> rows of cell ids in travel order
    rows: dict = field(default_factory=dict)


class _Builder:
    def __init__(self, R: float):
        self.R = R
        self.q = 1e-9 * R  # coincidence tolerance for merging cells
        self.positions = []
        self.contribs = []
        self.fallback = {}
        self.grid = {}

    def _key(self, p: Position):
        q = self.q
        return (round(p.x / q), round(p.y / q), round(p.z / q))

    def new(self, p: Position) -> int:
        cid = len(self.positions)
        self.positions.append(p)
        self.contribs.append([])
        self.grid.setdefault(self._key(p), []).append(cid)
        return cid

    def get_or_create(self, p: Position) -> int:
        kx, ky, kz = self._key(p)
        q2 = self.q * self.q
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for cid in self.grid.get((kx + dx, ky + dy, kz + dz), ()):
                        if self.positions[cid].dist2(p) <= q2:
                            return cid
        return self.new(p)

    def offset(self, src: int, dst: int):
        return _vec(self.positions[src], self.positions[dst])

    def directions(self, cid: int) -> tuple:
        parts = self.contribs[cid]
        if not parts:
            fb = self.fallback.get(cid)
            if not fb:
                return ()
            parts = [[(fb[0], 1.0)]]
        w = 1.0 / len(parts)
        merged = {}
        order = []
        for dist in parts:
            for v, p in dist:
                key = tuple(round(c / self.q) for c in v)
                if key not in merged:
                    merged[key] = [v, 0.0]
                    order.append(key)
                merged[key][1] += w * p
        items = [(merged[k][0], merged[k][1]) for k in order if merged[k][1] > 0]
        if not items:
            return ()
        head = [(v, p) for v, p in items[:-1]]
        last_p = max(0.0, 1.0 - math.fsum(p for _, p in head))
        out = [DirectionVector(*v, p=min(1.0, p)) for v, p in head]
        out.append(DirectionVector(*items[-1][0], p=min(1.0, last_p)))
        return tuple(out)


def synthesize(
    graph: BasicGraph,
    R: float,
    rules: Sequence[BranchRule] = (),
    lane_change_p: float = 0.1,
    position_tolerance=None,
):
    """Build the net and a layout mapping vertices and lane rows to cell ids."""
    if not R > 0:
        raise ValueError("radius must be positive")
    if not 0.0 <= lane_change_p <= 0.5:
        raise ValueError("lane_change_p must lie in [0, 0.5]")
    graph.validate()
    rule_at = {}
    for r in rules:
        if r.vertex not in graph.vertices:
            raise UnreachableBranch(f"branch rule at unknown vertex {r.vertex!r}")
        if r.vertex in rule_at:
            raise ValueError(f"two branch rules at vertex {r.vertex!r}")
        rule_at[r.vertex] = r

    bld = _Builder(R)
    layout = SynthesisLayout()
    for vid, pos in graph.vertices.items():
        layout.vertex_cells[vid] = bld.new(pos)
    options = {vid: [] for vid in graph.vertices}  # vid -> [(edge index, vector)]
    separators = set()

    for e_idx, edge in enumerate(graph.edges):
        a, b = graph.vertices[edge.source], graph.vertices[edge.target]
        ways = [(FORWARD, a, b, 0)]
        if edge.bidirectional:
            ways.append((REVERSE, b, a, 1))
        rows_by_way = {}
        for way, P, Q, shift in ways:
            sec = build_multiband(P, Q, R, edge.lanes, edge.separator, shift)
            n = sec.n
            ids = {}
            for k, row in enumerate(sec.rows):
                for i, (p, _) in zip(sec.index_range(k), row):
                    if way == FORWARD and k == 0 and i == 0:
                        ids[k, i] = layout.vertex_cells[edge.source]
                    elif way == FORWARD and k == 0 and i == n:
                        ids[k, i] = layout.vertex_cells[edge.target]
                    else:
                        ids[k, i] = bld.get_or_create(p)
            linked = {}
            for x, y in sec.links:
                linked.setdefault(x, []).append(y)
                linked.setdefault(y, []).append(x)
            for x, y in sec.separator_pairs:
                separators.add((ids[x], ids[y]))

            start_v = edge.source if way == FORWARD else edge.target
            end_v = edge.target if way == FORWARD else edge.source
            for k, row in enumerate(sec.rows):
                rng_k = sec.index_range(k)
                for i, (_, d) in zip(rng_k, row):
                    cid = ids[k, i]
                    fwd = (d.dx, d.dy, d.dz)
                    if k == 0 and i == 0:
                        if way == FORWARD:
                            options[start_v].append((e_idx, fwd))
                            continue
                        options[start_v].append(
                            (e_idx, bld.offset(layout.vertex_cells[start_v], cid))
                        )
                    if k == 0 and i == n:
                        if way == FORWARD:
                            bld.fallback.setdefault(cid, []).append(fwd)
                        else:
                            bld.contribs[cid].append(
                                [(bld.offset(cid, layout.vertex_cells[end_v]), 1.0)]
                            )
                        continue
                    lats = [bld.offset(cid, ids[y]) for y in sorted(linked.get((k, i), ()))]
                    if k >= 1 and i == rng_k[-1]:
                        inner = [y for y in linked.get((k, i), ()) if y[0] == k - 1]
                        if inner:
                            bld.contribs[cid].append([(bld.offset(cid, ids[inner[0]]), 1.0)])
                        else:
                            bld.contribs[cid].append([(fwd, 1.0)])
                        continue
                    dist = [(fwd, 1.0 - lane_change_p * len(lats))]
                    dist.extend((v, lane_change_p) for v in lats)
                    bld.contribs[cid].append(dist)
            rows_by_way[way] = (sec, ids)
            layout.rows[e_idx, way] = [
                [ids[k, i] for i in sec.index_range(k)] for k in range(len(sec.rows))
            ]

        if edge.bidirectional and edge.separator:
            (fsec, fids), (rsec, rids) = rows_by_way[FORWARD], rows_by_way[REVERSE]
            vcells = set(layout.vertex_cells.values())
            fcells = [fids[0, i] for i in fsec.index_range(0)]
            rcells = [rids[0, i] for i in rsec.index_range(0)]
            for u in fcells:
                if u in vcells:
                    continue
                for v in rcells:
                    if v not in vcells and neighbor_predicate(bld.positions[u], bld.positions[v], R):
                        separators.add((u, v))

    for vid, opts in options.items():
        rule = rule_at.get(vid)
        if not opts:
            if rule is not None:
                raise UnreachableBranch(f"rule at {vid!r} but no edge leaves it")
            continue
        cid = layout.vertex_cells[vid]
        if rule is None:
            w = 1.0 / len(opts)
            bld.contribs[cid].append([(v, w) for _, v in opts])
            continue
        by_edge = {}
        for e_idx, v in opts:
            by_edge.setdefault(e_idx, v)
        dist = []
        for e_idx, p in rule.choices:
            if e_idx not in by_edge:
                raise UnreachableBranch(f"rule at {vid!r} names edge {e_idx}, which does not leave it")
            dist.append((by_edge[e_idx], p))
        bld.contribs[cid].append(dist)
    cells = [Cell(i, p, Regular(), bld.directions(i)) for i, p in enumerate(bld.positions)]
    net = NetTopology(R, cells, separators, position_tolerance)
    return net, layout


def build_from_graph(graph: BasicGraph, R: float, rules: Sequence[BranchRule] = (), **kwargs) -> NetTopology:
    return synthesize(graph, R, rules, **kwargs)[0]


def mark_special_cells(net: NetTopology, assignments) -> NetTopology:
    """Apply generator / outflow / turnstile kinds; geometry is unchanged."""
    kinds = {}
    for cid, kind in assignments:
        if not 0 <= cid < len(net):
            raise UnknownCell(f"no cell {cid}")
        if cid in kinds or not isinstance(net.cells[cid].kind, Regular):
            raise DuplicateAssignment(f"cell {cid} already has a special kind")
        kinds[cid] = kind
    return net.with_kinds(kinds)
