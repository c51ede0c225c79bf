"""Net, graph, quarry-config, state, trace and metrics files.

Structured documents (net, graph, config, state) are JSON. Traces and
metrics are comma-delimited text with ``#`` header lines. Floats are written
with ``repr`` so every value round-trips exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from typing import Optional

from .circulation import CONTINUOUS, DISCRETE, MODES, NetState, Trace, TraceEvent
from .errors import DocumentSyntaxError, HashMismatch, ValidationFailed
from .net_core import (
    Cell,
    Constant,
    DirectionVector,
    Generator,
    NetTopology,
    Outflow,
    Periodic,
    Position,
    Regular,
    Table,
    Turnstile,
    validate_static_structure,
)
from .quarry import (
    ClosedLoop,
    CostRates,
    ExcavatorSite,
    LoadTemplate,
    OpenBoundary,
    QuarryConfig,
)
from .synthesis import BasicGraph, BranchRule, Edge

NET_FORMAT = "qcnet-net"
GRAPH_FORMAT = "qcnet-graph"
QUARRY_FORMAT = "qcnet-quarry"
TRACE_MAGIC = "# qcnet-trace 1"
TRACE_COLUMNS = ["step", "record", "cell", "target", "detail", "value", "payload"]


def _loads(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(exc.msg, exc.lineno) from None


def _get(doc, key, where):
    try:
        return doc[key]
    except (KeyError, TypeError, IndexError):
        raise DocumentSyntaxError(f"{where}: missing field {key!r}") from None


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


# --- generation functions and kinds --------------------------------------------


def function_to_doc(fn) -> dict:
    if isinstance(fn, Constant):
        return {"type": "constant", "rate": fn.rate}
    if isinstance(fn, Periodic):
        return {"type": "periodic", "period": fn.period, "amount": fn.amount, "offset": fn.offset}
    if isinstance(fn, Table):
        return {"type": "table", "entries": [[s, a] for s, a in fn.entries]}
    raise TypeError(f"unknown generation function {fn!r}")


def function_from_doc(doc) -> object:
    kind = _get(doc, "type", "generation function")
    if kind == "constant":
        return Constant(_get(doc, "rate", "constant"))
    if kind == "periodic":
        return Periodic(int(_get(doc, "period", "periodic")), _get(doc, "amount", "periodic"),
                        int(doc.get("offset", 0)))
    if kind == "table":
        return Table(tuple((int(s), a) for s, a in _get(doc, "entries", "table")))
    raise DocumentSyntaxError(f"unknown generation function type {kind!r}")


def kind_to_doc(kind) -> dict:
    if isinstance(kind, Regular):
        return {"type": "regular"}
    if isinstance(kind, Outflow):
        return {"type": "outflow"}
    if isinstance(kind, Turnstile):
        return {"type": "turnstile", "tau": kind.tau}
    if isinstance(kind, Generator):
        return {
            "type": "generator",
            "function": function_to_doc(kind.function),
            "template": dict(kind.template),
            "serial_key": kind.serial_key,
        }
    raise TypeError(f"unknown cell kind {kind!r}")


def kind_from_doc(doc):
    kind = _get(doc, "type", "cell kind")
    if kind == "regular":
        return Regular()
    if kind == "outflow":
        return Outflow()
    if kind == "turnstile":
        return Turnstile(float(_get(doc, "tau", "turnstile")))
    if kind == "generator":
        template = {str(k): float(v) for k, v in doc.get("template", {}).items()}
        return Generator(function_from_doc(_get(doc, "function", "generator")), template,
                         doc.get("serial_key"))
    raise DocumentSyntaxError(f"unknown cell kind {kind!r}")


# --- nets -------------------------------------------------------------------------


def serialize_net(net: NetTopology) -> str:
    """Canonical text: one cell per line, keys sorted."""
    head = {
        "format": NET_FORMAT,
        "version": 1,
        "radius": net.radius,
        "position_tolerance": net.position_tolerance,
        "separator_pairs": sorted([a, b] for a, b in net.separator_pairs),
    }
    lines = ["{"]
    for k in sorted(head):
        lines.append(f"{json.dumps(k)}:{_dump(head[k])},")
    lines.append('"cells":[')
    for i, c in enumerate(net.cells):
        doc = {
            "id": c.id,
            "x": c.position.x,
            "y": c.position.y,
            "z": c.position.z,
            "kind": kind_to_doc(c.kind),
            "directions": [[d.dx, d.dy, d.dz, d.p] for d in c.directions],
            "payload_schema": list(c.payload_schema),
        }
        lines.append(_dump(doc) + ("," if i < len(net.cells) - 1 else ""))
    lines.append("]}")
    return "\n".join(lines) + "\n"


def net_hash(net: NetTopology) -> str:
    return hashlib.sha256(serialize_net(net).encode()).hexdigest()


def net_from_doc(doc) -> NetTopology:
    if doc.get("format") != NET_FORMAT:
        raise DocumentSyntaxError(f"not a {NET_FORMAT} document")
    cells = []
    for i, cd in enumerate(_get(doc, "cells", "net")):
        where = f"cell #{i}"
        try:
            dirs = tuple(DirectionVector(*map(float, d)) for d in cd.get("directions", []))
            cell = Cell(
                int(_get(cd, "id", where)),
                Position(float(_get(cd, "x", where)), float(_get(cd, "y", where)), float(cd.get("z", 0.0))),
                kind_from_doc(cd.get("kind", {"type": "regular"})),
                dirs,
                tuple(cd.get("payload_schema", ())),
            )
        except (TypeError, ValueError) as exc:
            raise DocumentSyntaxError(f"{where}: {exc}") from None
        cells.append(cell)
    cells.sort(key=lambda c: c.id)
    pairs = [tuple(p) for p in doc.get("separator_pairs", [])]
    try:
        return NetTopology(float(_get(doc, "radius", "net")), cells, pairs, doc.get("position_tolerance"))
    except ValueError as exc:
        raise DocumentSyntaxError(str(exc)) from None


def parse_net(text: str, strict: bool = True) -> NetTopology:
    """Parse a net document; with ``strict`` an invalid structure raises ValidationFailed."""
    net = net_from_doc(_loads(text))
    if strict:
        report = validate_static_structure(net)
        if not report.valid:
            raise ValidationFailed(report)
    return net


# --- graphs -----------------------------------------------------------------------


def graph_to_doc(graph: BasicGraph, rules=()) -> dict:
    return {
        "format": GRAPH_FORMAT,
        "version": 1,
        "vertices": [{"id": v, "x": p.x, "y": p.y, "z": p.z} for v, p in graph.vertices.items()],
        "edges": [
            {"source": e.source, "target": e.target, "lanes": e.lanes,
             "separator": e.separator, "bidirectional": e.bidirectional}
            for e in graph.edges
        ],
        "rules": [{"vertex": r.vertex, "choices": [[e, p] for e, p in r.choices]} for r in rules],
    }


def serialize_graph(graph: BasicGraph, rules=()) -> str:
    return json.dumps(graph_to_doc(graph, rules), indent=1, sort_keys=True) + "\n"


def graph_from_doc(doc):
    if doc.get("format", GRAPH_FORMAT) != GRAPH_FORMAT:
        raise DocumentSyntaxError(f"not a {GRAPH_FORMAT} document")
    verts = {}
    for i, vd in enumerate(_get(doc, "vertices", "graph")):
        vid = str(_get(vd, "id", f"vertex #{i}"))
        if vid in verts:
            raise DocumentSyntaxError(f"duplicate vertex id {vid!r}")
        verts[vid] = Position(float(_get(vd, "x", vid)), float(_get(vd, "y", vid)), float(vd.get("z", 0.0)))
    edges = []
    for i, ed in enumerate(_get(doc, "edges", "graph")):
        where = f"edge #{i}"
        try:
            edges.append(Edge(str(_get(ed, "source", where)), str(_get(ed, "target", where)),
                              int(ed.get("lanes", 1)), bool(ed.get("separator", False)),
                              bool(ed.get("bidirectional", False))))
        except ValueError as exc:
            raise DocumentSyntaxError(f"{where}: {exc}") from None
    graph = BasicGraph(verts, edges)
    try:
        graph.validate()
        rules = [BranchRule(str(_get(r, "vertex", "rule")), tuple(map(tuple, _get(r, "choices", "rule"))))
                 for r in doc.get("rules", [])]
    except ValueError as exc:
        raise DocumentSyntaxError(str(exc)) from None
    return graph, rules


def parse_graph(text: str):
    """Returns ``(BasicGraph, [BranchRule, ...])``."""
    return graph_from_doc(_loads(text))


# --- quarry configs ---------------------------------------------------------------


def _site(v):
    return v if isinstance(v, str) else int(v)


def config_to_doc(cfg: QuarryConfig, steps: Optional[int] = None, seed: Optional[int] = None) -> dict:
    b = cfg.boundary
    if isinstance(b, ClosedLoop):
        boundary = {"type": "closed_loop", "tippers": b.tippers}
    else:
        boundary = {"type": "open", "entrance": b.entrance, "exit": b.exit,
                    "function": function_to_doc(b.function)}
    doc = {
        "format": QUARRY_FORMAT,
        "version": 1,
        "graph": graph_to_doc(cfg.graph, cfg.rules),
        "radius": cfg.radius,
        "theta": cfg.theta,
        "excavators": [
            {"site": s.cell, "loading_time": s.loading_time, "volume": s.template.volume,
             "composition": dict(s.template.composition)}
            for s in cfg.excavators
        ],
        "dumps": list(cfg.dumps),
        "boundary": boundary,
        "rates": {"move_fuel": cfg.rates.move_fuel, "move_emission": cfg.rates.move_emission,
                  "idle_fuel": cfg.rates.idle_fuel, "idle_emission": cfg.rates.idle_emission},
        "lane_change_p": cfg.lane_change_p,
    }
    if steps is not None:
        doc["steps"] = steps
    if seed is not None:
        doc["seed"] = seed
    return doc


def serialize_config(cfg: QuarryConfig, steps=None, seed=None) -> str:
    return json.dumps(config_to_doc(cfg, steps, seed), indent=1, sort_keys=True) + "\n"


def parse_config(text: str):
    """Returns ``(QuarryConfig, options)`` where options holds optional steps/seed."""
    doc = _loads(text)
    if doc.get("format") != QUARRY_FORMAT:
        raise DocumentSyntaxError(f"not a {QUARRY_FORMAT} document")
    graph, rules = graph_from_doc(_get(doc, "graph", "config"))
    sites = []
    for i, ed in enumerate(_get(doc, "excavators", "config")):
        where = f"excavator #{i}"
        tmpl = LoadTemplate(float(_get(ed, "volume", where)),
                            {str(k): float(v) for k, v in _get(ed, "composition", where).items()})
        sites.append(ExcavatorSite(_site(_get(ed, "site", where)), float(_get(ed, "loading_time", where)), tmpl))
    bd = _get(doc, "boundary", "config")
    btype = _get(bd, "type", "boundary")
    if btype == "closed_loop":
        boundary = ClosedLoop(int(_get(bd, "tippers", "boundary")))
    elif btype == "open":
        boundary = OpenBoundary(_site(_get(bd, "entrance", "boundary")), _site(_get(bd, "exit", "boundary")),
                                function_from_doc(_get(bd, "function", "boundary")))
    else:
        raise DocumentSyntaxError(f"unknown boundary type {btype!r}")
    rates = CostRates(**{k: float(v) for k, v in doc.get("rates", {}).items()})
    cfg = QuarryConfig(
        graph=graph,
        radius=float(_get(doc, "radius", "config")),
        theta=float(doc.get("theta", 1.0)),
        excavators=sites,
        dumps=[_site(d) for d in _get(doc, "dumps", "config")],
        boundary=boundary,
        rules=rules,
        rates=rates,
        lane_change_p=float(doc.get("lane_change_p", 0.0)),
    )
    cfg.validate()
    options = {k: int(doc[k]) for k in ("steps", "seed") if k in doc}
    return cfg, options


# --- initial states ---------------------------------------------------------------


def parse_state(text: str, net: NetTopology) -> NetState:
    """``{"mode": "discrete", "tokens": {cell: payload}}`` or
    ``{"mode": "continuous", "levels": {cell: level} | [levels]}``."""
    doc = _loads(text)
    mode = doc.get("mode", DISCRETE)
    try:
        if mode == DISCRETE:
            tokens = doc.get("tokens", {})
            if isinstance(tokens, list):
                tokens = {int(c): {} for c in tokens}
            return NetState.discrete(net, {int(c): p for c, p in tokens.items()})
        if mode == CONTINUOUS:
            levels = doc.get("levels", {})
            if isinstance(levels, dict):
                levels = {int(c): v for c, v in levels.items()}
            return NetState.continuous(net, levels)
    except (ValueError, IndexError) as exc:
        raise DocumentSyntaxError(f"state: {exc}") from None
    raise DocumentSyntaxError(f"unknown mode {mode!r}")


# --- traces -----------------------------------------------------------------------


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def encode_payload(p) -> str:
    if p is None:
        return ""
    if not p:
        return "{}"
    for k in p:
        if any(ch in k for ch in "=;,\n"):
            raise ValueError(f"payload attribute name {k!r} cannot be serialized")
    return ";".join(f"{k}={float(v)!r}" for k, v in p.items())


def decode_payload(s: str):
    if s == "":
        return None
    if s == "{}":
        return {}
    out = {}
    for part in s.split(";"):
        k, _, v = part.partition("=")
        out[k] = float(v)
    return out


def export_trace(trace: Trace, stride: int = 1, net: Optional[NetTopology] = None) -> str:
    """Delimited text: header, then per step the snapshot rows (when the step
    is a multiple of ``stride`` or the last one) followed by that step's events."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    net = net or trace.net
    if net is None:
        raise ValueError("exporting a trace needs its net")
    buf = io.StringIO()
    buf.write(TRACE_MAGIC + "\n")
    for k, v in (("net_hash", net_hash(net)), ("theta", repr(float(trace.theta))), ("mode", trace.mode),
                 ("seed", trace.seed), ("steps", trace.steps), ("stride", stride), ("cells", len(net))):
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    snaps = {s: snap for s, snap in trace.snapshots if s % stride == 0 or s == trace.steps}
    by_step = {}
    for e in trace.events:
        by_step.setdefault(e.step, []).append(e)
    for step in sorted(set(snaps) | set(by_step)):
        snap = snaps.get(step)
        if snap is not None:
            for cell, val in enumerate(snap):
                if trace.mode == CONTINUOUS:
                    w.writerow([step, "snapshot", cell, "", "", _num(val), ""])
                elif val is None:
                    w.writerow([step, "snapshot", cell, "", "N", "", ""])
                else:
                    w.writerow([step, "snapshot", cell, "", "S", "", encode_payload(val)])
        for e in by_step.get(step, ()):
            w.writerow([e.step, e.kind, e.cell, _num(e.target), e.reason or "", _num(e.amount),
                        encode_payload(e.payload)])
    return buf.getvalue()


def import_trace(text: str, net: Optional[NetTopology] = None) -> Trace:
    lines = text.splitlines()
    if not lines or lines[0] != TRACE_MAGIC:
        raise DocumentSyntaxError("not a qcnet trace", 1)
    header = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        k, _, v = lines[i][1:].strip().partition("=")
        header[k] = v
        i += 1
    try:
        mode = header["mode"]
        theta, seed, steps = float(header["theta"]), int(header["seed"]), int(header["steps"])
        stride, ncells = int(header["stride"]), int(header["cells"])
    except (KeyError, ValueError) as exc:
        raise DocumentSyntaxError(f"bad trace header: {exc}") from None
    if mode not in MODES:
        raise DocumentSyntaxError(f"unknown mode {mode!r}")
    if net is not None and net_hash(net) != header.get("net_hash"):
        raise HashMismatch("trace was produced from a different net")
    trace = Trace(theta, mode, seed, steps, stride, net=net)
    reader = csv.reader(lines[i:])
    if next(reader, None) != TRACE_COLUMNS:
        raise DocumentSyntaxError("missing trace column header", i + 1)
    current, cur_step = None, None
    for lineno, row in enumerate(reader, start=i + 2):
        if len(row) != len(TRACE_COLUMNS):
            raise DocumentSyntaxError(f"expected {len(TRACE_COLUMNS)} columns", lineno)
        try:
            step, record, cell = int(row[0]), row[1], int(row[2])
            if record == "snapshot":
                if cur_step != step:
                    current, cur_step = [None] * ncells, step
                    trace.snapshots.append((step, current))
                if mode == CONTINUOUS:
                    current[cell] = float(row[5])
                elif row[4] == "S":
                    current[cell] = decode_payload(row[6]) or {}
                continue
            trace.events.append(TraceEvent(
                step, record, cell,
                int(row[3]) if row[3] else None,
                row[4] or None,
                float(row[5]) if row[5] else None,
                decode_payload(row[6]),
            ))
        except (ValueError, IndexError) as exc:
            raise DocumentSyntaxError(str(exc), lineno) from None
    trace.snapshots = [(s, tuple(snap)) for s, snap in trace.snapshots]
    return trace


# --- metrics ----------------------------------------------------------------------


def serialize_metrics(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    for name, value in rows:
        w.writerow([name, _num(float(value)) if isinstance(value, float) else value])
    return buf.getvalue()


def parse_metrics(text: str) -> dict:
    rows = list(csv.reader(text.splitlines()))
    if not rows or rows[0] != ["metric", "value"]:
        raise DocumentSyntaxError("not a metrics file", 1)
    out = {}
    for name, value in rows[1:]:
        v = float(value)
        out[name] = int(v) if v.is_integer() and "." not in value and "e" not in value else v
    return out
