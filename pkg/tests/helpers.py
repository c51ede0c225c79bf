"""Random nets and graphs shared by several test modules."""

import numpy as np

from qcnet.net_core import Cell, DirectionVector, NetTopology, Position
from qcnet.synthesis import BasicGraph, Edge

LATTICE_STEPS = ((2.0, 0.0), (-2.0, 0.0), (0.0, 2.0), (0.0, -2.0))


def random_lattice_net(rng, n, R=1.0):
    """Cells on a square lattice of pitch 2R with 1-4 random axis directions.

    Directions at the lattice boundary may dangle.
    """
    side = int(np.ceil(np.sqrt(n)))
    cells = []
    for i in range(n):
        k = int(rng.integers(1, 5))
        pick = rng.choice(4, k, replace=False)
        w = rng.random(k) + 0.05
        w = w / w.sum()
        ps = list(w[:-1]) + [max(0.0, 1.0 - float(w[:-1].sum()))]
        dirs = tuple(
            DirectionVector(LATTICE_STEPS[j][0] * R, LATTICE_STEPS[j][1] * R, p=float(p))
            for j, p in zip(pick, ps)
        )
        cells.append(Cell(i, Position(2.0 * R * (i % side), 2.0 * R * (i // side)), directions=dirs))
    return NetTopology(R, cells)


def random_graph(rng, R=1.0):
    """Connected planar graph on a jittered grid; random lanes and options."""
    k = int(rng.integers(2, 5))
    spacing = 24.0 * R
    verts = {}
    for i in range(k):
        for j in range(k):
            jitter = rng.uniform(-3.0 * R, 3.0 * R, 2)
            verts[f"n{i}_{j}"] = Position(i * spacing + jitter[0], j * spacing + jitter[1])
    pairs = []
    for i in range(k):
        for j in range(k):
            if i + 1 < k:
                pairs.append((f"n{i}_{j}", f"n{i + 1}_{j}"))
            if j + 1 < k:
                pairs.append((f"n{i}_{j}", f"n{i}_{j + 1}"))
    # random spanning tree plus a few extra grid edges
    order = rng.permutation(len(pairs))
    parent = {v: v for v in verts}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    chosen = []
    for idx in order:
        a, b = pairs[idx]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            chosen.append((a, b))
        elif rng.random() < 0.3:
            chosen.append((a, b))
    edges = []
    for a, b in chosen:
        if rng.random() < 0.5:
            a, b = b, a
        edges.append(Edge(a, b, lanes=int(rng.integers(1, 4)),
                          separator=bool(rng.random() < 0.3),
                          bidirectional=bool(rng.random() < 0.3)))
    return BasicGraph(verts, edges)
