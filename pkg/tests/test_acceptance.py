"""End-to-end acceptance checks.

Each test records one ``PASS``/``FAIL`` line in ``RESULTS``; the conftest
prints them in the pytest summary, and running this file directly prints
them as it goes.
"""

import math
import sys

import numpy as np
import pytest

from helpers import random_graph, random_lattice_net
from qcnet import cli
from qcnet.circulation import MOVED, TURNSTILE_CLOSED, BLOCKED, HELD, NetState, Simulation, run
from qcnet.errors import AmbiguousTarget
from qcnet.formats import serialize_config, serialize_net
from qcnet.net_core import (
    OUTFLOW,
    Cell,
    Constant,
    DirectionVector,
    Generator,
    NetTopology,
    Position,
    Regular,
    Turnstile,
    neighbor_predicate,
    validate_static_structure,
)
from qcnet.quarry import ClosedLoop, ExcavatorSite, LoadTemplate, QuarryConfig, compute_metrics, run_quarry
from qcnet.synthesis import BasicGraph, BranchRule, Edge, loop_graph, mark_special_cells, ring_graph, synthesize

RESULTS = []


def record(label, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
    RESULTS.append(line)
    print(line)
    assert ok, line


def line_net(n, R=1.0, kinds=None):
    kinds = kinds or {}
    cells = [
        Cell(i, Position(2.0 * R * i, 0.0), kinds.get(i, Regular()),
             (DirectionVector(2.0 * R, 0.0),) if i < n - 1 else ())
        for i in range(n)
    ]
    return NetTopology(R, cells)


# 1 ------------------------------------------------------------------------------


def test_ring_circulation():
    details, ok = [], True
    for n in (4, 8, 16):
        net, layout = synthesize(ring_graph(n, 1.0), 1.0)
        start = layout.vertex_cells["v0"]
        trace = run(net, NetState.discrete(net, [start]), stop=2 * n)
        where = [next(i for i, p in enumerate(snap) if p is not None) for _, snap in trace.snapshots]
        ok &= len(net) == n
        # first return to the start cell happens at step n
        ok &= where.index(start, 1) == n and where[2 * n] == start
        ok &= all(net.successors[a][0] == b for a, b in zip(where, where[1:]))
        prefix = where[:4]
        ok &= prefix == [layout.vertex_cells[f"v{i}"] for i in range(4)] if n == 4 else True
        details.append(f"n={n} period={where.index(start, 1)}")
    record("ring of n cells circulates with period n, one cell per step", ok, "; ".join(details))


# 2 ------------------------------------------------------------------------------


def test_discrete_conservation():
    rng = np.random.default_rng(2024)
    worst = 0
    for k in range(100):
        n = int(rng.integers(2, 501))
        net = random_lattice_net(rng, n)
        m = int(rng.integers(1, n + 1))
        state = NetState.discrete(net, rng.choice(n, m, replace=False).tolist())
        sim = Simulation(net, state, seed=k, record_events=False)
        for _ in range(1000):
            sim.step()
            worst = max(worst, abs(sim.state.transitable_count() - m))
            if worst:
                break
    record("discrete token count constant (100 random nets x 1000 steps)", worst == 0,
           f"max deviation {worst}")


# 3 ------------------------------------------------------------------------------


def test_continuous_conservation():
    rng = np.random.default_rng(3)
    nets = [synthesize(ring_graph(16, 1.0), 1.0)[0], random_lattice_net(rng, 64), random_lattice_net(rng, 200)]
    worst_drift, worst_min = 0.0, math.inf
    for i, net in enumerate(nets):
        for delta in (0.05, 0.7, 4.0):
            levels = rng.random(len(net)) * 3.0
            sim = Simulation(net, NetState.continuous(net, levels), delta=delta, record_events=False)
            total0 = sim.state.total_level()
            for _ in range(10_000):
                sim.step()
                worst_drift = max(worst_drift, abs(sim.state.total_level() - total0))
                worst_min = min(worst_min, float(sim.state.levels.min()))
    ok = worst_drift <= 1e-9 and worst_min >= 0.0
    record("continuous total level conserved, levels stay >= 0 (10^4 steps)", ok,
           f"max drift {worst_drift:.3g}, min level {worst_min:.3g}")


# 4 ------------------------------------------------------------------------------


def test_turnstile_hold():
    details, ok = [], True
    for theta in (1.0, 0.5):
        for m in (1, 2, 5, 10):
            net = line_net(8, kinds={3: Turnstile(m * theta)})
            trace = run(net, NetState.discrete(net, [0]), theta=theta, stop=m + 12)
            closed = [e.step for e in trace.events if e.kind == TURNSTILE_CLOSED and e.cell == 3]
            left = [e.step for e in trace.events if e.kind == MOVED and e.cell == 3]
            held = [e.step for e in trace.events if e.kind == BLOCKED and e.cell == 3 and e.reason == HELD]
            hold = left[0] - closed[0]
            ok &= len(closed) == 1 and hold == m and held == list(range(closed[0], closed[0] + m))
            details.append(f"theta={theta} m={m}:{hold}")
    record("turnstile with tau = m*theta releases exactly m steps after closing", ok, " ".join(details))


# 5 ------------------------------------------------------------------------------


def test_generator_outflow_balance():
    n = 12
    net = line_net(n, kinds={0: Generator(Constant(1)), n - 1: OUTFLOW})
    sim = Simulation(net, NetState.discrete(net), record_events=False)
    per_step, balance_ok = [], True
    prev = 0
    for _ in range(200):
        sim.step()
        st = sim.state
        balance_ok &= st.generated - st.absorbed - st.transitable_count() == 0
        per_step.append(st.absorbed - prev)
        prev = st.absorbed
    steady = per_step[n:]
    ok = balance_ok and all(a == 1 for a in steady)
    record("generator f=1 into outflow: 1 absorbed per step, generated-absorbed-in_flight = 0", ok,
           f"absorbed/step after warmup in {sorted(set(steady))}")


# 6 ------------------------------------------------------------------------------


def parallel_junctions(copies, p):
    verts, edges, rules = {}, [], []
    for k in range(copies):
        y = 40.0 * k
        a, b, c, d = (f"a{k}", f"b{k}", f"c{k}", f"d{k}")
        verts.update({a: Position(0, y), b: Position(10, y), c: Position(20, y + 6), d: Position(20, y - 6)})
        base = len(edges)
        edges += [Edge(a, b), Edge(b, c), Edge(b, d)]
        rules.append(BranchRule(b, ((base + 1, p[0]), (base + 2, p[1]))))
    net, layout = synthesize(BasicGraph(verts, edges), 1.0, rules)
    marks = []
    for k in range(copies):
        marks.append((layout.vertex_cells[f"a{k}"], Generator(Constant(1))))
        marks += [(layout.vertex_cells[f"c{k}"], OUTFLOW), (layout.vertex_cells[f"d{k}"], OUTFLOW)]
    net = mark_special_cells(net, marks)
    return net, [layout.vertex_cells[f"c{k}"] for k in range(copies)]


def test_branch_frequency():
    p = (0.7, 0.3)
    net, first_branch = parallel_junctions(8, p)
    sim = Simulation(net, NetState.discrete(net), seed=6, record_events=False)
    while sim.state.absorbed < 100_000:
        sim.step()
    counts = sim.state.absorbed_by_cell
    total = sum(counts.values())
    first = sum(counts.get(c, 0) for c in first_branch)
    freq = first / total
    tol = 4 * math.sqrt(p[0] * (1 - p[0]) / total)
    record("junction split frequency within 4 sigma of p=0.7", abs(freq - p[0]) <= tol,
           f"{total} traversals, freq {freq:.4f}, tolerance {tol:.4f}")


# 7 ------------------------------------------------------------------------------


def test_synthesis_geometry():
    rng = np.random.default_rng(7)
    built, redrawn, bad_pairs, isolated, nondet = 0, 0, 0, 0, 0
    while built < 100:
        graph = random_graph(rng)
        try:
            net, layout = synthesize(graph, 1.0)
        except AmbiguousTarget:
            redrawn += 1  # two roads physically overlap at a junction
            continue
        built += 1
        for rows in layout.rows.values():
            for row in rows:
                bad_pairs += sum(
                    not neighbor_predicate(net.cells[a].position, net.cells[b].position, 1.0)
                    for a, b in zip(row, row[1:])
                )
        if graph.is_connected():
            isolated += len(validate_static_structure(net).isolated)
        again, _ = synthesize(graph, 1.0)
        nondet += again != net or serialize_net(again) != serialize_net(net)
    ok = bad_pairs == 0 and isolated == 0 and nondet == 0
    record("synthesized lanes: consecutive cells neighbor, none isolated, deterministic", ok,
           f"{bad_pairs} bad pairs, {isolated} isolated, {nondet} nondeterministic, {redrawn} overlapping graphs redrawn")


# 8 ------------------------------------------------------------------------------


def lane_labels(layout):
    vertex = set(layout.vertex_cells.values())
    label = {}
    for (_, way), rows in layout.rows.items():
        for k, row in enumerate(rows):
            for c in row:
                if c not in vertex:
                    label.setdefault(c, set()).add((way, k))
    return label


def cross_lane_moves(graph, seed):
    net, layout = synthesize(graph, 1.0, lane_change_p=0.25)
    rng = np.random.default_rng(seed)
    tokens = rng.choice(len(net), int(0.7 * len(net)), replace=False).tolist()
    trace = run(net, NetState.discrete(net, tokens), stop=10_000, seed=seed, stride=10_000)
    label = lane_labels(layout)
    moves = [e for e in trace.events if e.kind == MOVED]
    crossed = sum(1 for e in moves if e.cell in label and e.target in label and not (label[e.cell] & label[e.target]))
    return crossed, len(moves)


def test_separator_integrity():
    square = [(0, 0), (14, 0), (14, 14), (0, 14)]
    lanes_sep, moves_a = cross_lane_moves(loop_graph(square, lanes=2, separator=True), 8)
    ways_sep, moves_b = cross_lane_moves(loop_graph(square, bidirectional=True, separator=True), 9)
    open_lanes, _ = cross_lane_moves(loop_graph(square, lanes=2), 8)
    ok = lanes_sep == 0 and ways_sep == 0 and moves_a > 0 and moves_b > 0
    record("separated lanes see zero cross-lane moves under heavy traffic", ok,
           f"2-lane {lanes_sep}/{moves_a}, two-way {ways_sep}/{moves_b}; unseparated control {open_lanes}")


# 9 ------------------------------------------------------------------------------


def quarry_config(tippers):
    graph = loop_graph([(0, 0), (10, 0), (10, 10), (0, 10)])
    site = ExcavatorSite("v0", 5.0, LoadTemplate(10.0, {"clear_sand": 0.6, "water": 0.05, "stones": 0.3, "clay": 0.05}))
    return QuarryConfig(graph, 1.0, 1.0, [site], ["v2"], ClosedLoop(tippers))


def test_quarry_single_tipper_cycle():
    cfg = quarry_config(1)
    model, trace = run_quarry(cfg, 1000, seed=0)
    assert len(model.net) == 20
    m = compute_metrics(trace, cfg, model)
    record("quarry: single tipper cycle time is exactly 25 steps", m.mean_cycle_time == 25.0,
           f"mean cycle {m.mean_cycle_time}")


def test_quarry_bottleneck_throughput():
    cfg = quarry_config(5)
    model, trace = run_quarry(cfg, 10_000, seed=0)
    m = compute_metrics(trace, cfg, model)
    err = abs(m.loads_per_step - 0.2) / 0.2
    record("quarry: 5 tippers converge to 1 load per 5 steps within 5%", err <= 0.05,
           f"{m.loads_per_step:.4f} loads/step, relative error {err:.1%}")


# 10 -----------------------------------------------------------------------------


def test_cli_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_DIR_ENV, raising=False)
    net, _ = parallel_junctions(2, (0.5, 0.5))
    (tmp_path / "net.json").write_text(serialize_net(net))
    (tmp_path / "q.json").write_text(serialize_config(quarry_config(5), steps=2000))
    outputs = []
    for k in (1, 2):
        rc1 = cli.main(["simulate", str(tmp_path / "net.json"), "--steps", "500", "--seed", "7",
                        "--conflict", "random", "--trace", str(tmp_path / f"sim{k}.csv")])
        rc2 = cli.main(["quarry", str(tmp_path / "q.json"), "--seed", "7",
                        "--trace", str(tmp_path / f"q{k}.csv"), "--metrics", str(tmp_path / f"m{k}.csv")])
        outputs.append((rc1, rc2))
    same = all((tmp_path / f"{name}1.csv").read_bytes() == (tmp_path / f"{name}2.csv").read_bytes()
               for name in ("sim", "q", "m"))
    ok = same and outputs == [(0, 0), (0, 0)]
    record("simulate and quarry with a fixed seed write byte-identical files", ok, f"exit codes {outputs}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
