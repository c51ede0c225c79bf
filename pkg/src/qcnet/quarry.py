"""Open-pit (sandpit) haulage on a quasi cellular net.

Tippers are tokens circulating on the haul net. An excavator is a
turnstile: the hold period is the loading time, and the load is assigned
when the turnstile reopens. Dump sites either absorb tippers (open
boundary, quarry entrance/exit modeled by a generator and outflows) or just
empty them and let them drive on (closed loop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .circulation import (
    ABSORBED,
    BLOCKED,
    CLOSED,
    COMPOSITION_PREFIX,
    DISCRETE,
    MOVED,
    OCCUPIED,
    TURNSTILE_CLOSED,
    TURNSTILE_OPENED,
    NetState,
    StepEffects,
    Trace,
    run,
)
from .errors import EmptyTrace, InvalidConfig, InvalidSite
from .net_core import OUTFLOW, Generator, NetTopology, Turnstile
from .synthesis import BasicGraph, mark_special_cells, synthesize

COMPONENTS = ("clear_sand", "water", "stones", "clay")
TIPPER = "tipper"
VOLUME = "rock_mass_volume"
FUEL = "fuel_consumption"
EMISSION = "exhaust_emission"


def composition_key(component: str) -> str:
    return COMPOSITION_PREFIX + component


@dataclass(frozen=True)
class LoadTemplate:
    volume: float
    composition: Mapping[str, float]

    def __post_init__(self):
        if not self.volume >= 0:
            raise InvalidConfig("load volume must be >= 0")
        fr = list(self.composition.values())
        if any(not 0.0 <= f <= 1.0 for f in fr):
            raise InvalidConfig("composition fractions must lie in [0, 1]")
        if abs(math.fsum(fr) - 1.0) > 1e-9:
            raise InvalidConfig(f"composition fractions sum to {math.fsum(fr)!r}, not 1")


@dataclass(frozen=True)
class ExcavatorSite:
    cell: object  # cell id, or vertex id (str) resolved at build time
    loading_time: float
    template: LoadTemplate

    def __post_init__(self):
        if not self.loading_time > 0:
            raise InvalidConfig("loading time must be > 0")


@dataclass(frozen=True)
class ClosedLoop:
    tippers: int


@dataclass(frozen=True)
class OpenBoundary:
    entrance: object
    exit: object
    function: object  # generation function of the entrance


@dataclass(frozen=True)
class CostRates:
    """Linear per-step fuel and emission rates (moving vs. blocked)."""

    move_fuel: float = 0.0
    move_emission: float = 0.0
    idle_fuel: float = 0.0
    idle_emission: float = 0.0


@dataclass
class QuarryConfig:
    graph: BasicGraph
    radius: float
    theta: float
    excavators: list
    dumps: list
    boundary: object
    rules: list = field(default_factory=list)
    rates: CostRates = field(default_factory=CostRates)
    lane_change_p: float = 0.0

    def validate(self):
        if not self.excavators:
            raise InvalidConfig("at least one excavator site is required")
        if not self.dumps:
            raise InvalidConfig("at least one dump site is required")
        if isinstance(self.boundary, ClosedLoop):
            if self.boundary.tippers < 1:
                raise InvalidConfig("closed loop needs at least one tipper")
        elif not isinstance(self.boundary, OpenBoundary):
            raise InvalidConfig(f"unknown boundary mode {self.boundary!r}")


def empty_tipper(tipper_id: int = 0) -> dict:
    return {TIPPER: float(tipper_id), VOLUME: 0.0, FUEL: 0.0, EMISSION: 0.0}


def on_load_complete(tipper: Mapping[str, float], template: LoadTemplate) -> dict:
    """Tipper leaving the excavator: volume and composition set from the template."""
    out = {k: v for k, v in tipper.items() if not k.startswith(COMPOSITION_PREFIX)}
    out[VOLUME] = float(template.volume)
    for comp, frac in template.composition.items():
        out[composition_key(comp)] = float(frac)
    return out


def accumulate_motion_costs(tipper: Mapping[str, float], fuel: float, emission: float) -> dict:
    out = dict(tipper)
    out[FUEL] = out.get(FUEL, 0.0) + fuel
    out[EMISSION] = out.get(EMISSION, 0.0) + emission
    return out


class QuarryEffects(StepEffects):
    def __init__(self, templates: Mapping[int, LoadTemplate], reset_cells, rates: CostRates):
        self.templates = dict(templates)
        self.reset_cells = frozenset(reset_cells)
        self.rates = rates

    def on_opened(self, cell, payload, step):
        t = self.templates.get(cell)
        return payload if t is None else on_load_complete(payload, t)

    def on_moved(self, src, dst, payload, step):
        p = accumulate_motion_costs(payload, self.rates.move_fuel, self.rates.move_emission)
        if dst in self.reset_cells:
            p[VOLUME] = 0.0
        return p

    def on_blocked(self, cell, payload, step):
        if not (self.rates.idle_fuel or self.rates.idle_emission):
            return payload
        return accumulate_motion_costs(payload, self.rates.idle_fuel, self.rates.idle_emission)


@dataclass
class QuarryModel:
    net: NetTopology
    state: NetState
    excavators: dict  # cell -> ExcavatorSite
    dumps: list
    exit: Optional[int] = None
    entrance: Optional[int] = None


def _resolve(ref, layout, n: int) -> int:
    if isinstance(ref, str):
        if ref not in layout.vertex_cells:
            raise InvalidSite(f"unknown vertex {ref!r}")
        return layout.vertex_cells[ref]
    if isinstance(ref, bool) or not isinstance(ref, int) or not 0 <= ref < n:
        raise InvalidSite(f"site {ref!r} is not a cell of the net")
    return ref


def haul_cycle(net: NetTopology, start: int) -> list:
    """Cells visited by following the first resolved direction from ``start``."""
    seen = [start]
    pos = {start: 0}
    cur = start
    while True:
        nxt = next((v for v in net.successors[cur] if v is not None), None)
        if nxt is None:
            raise InvalidConfig(f"cell {start} is not on a closed haul loop")
        if nxt in pos:
            if nxt != start:
                raise InvalidConfig(f"cell {start} is not on a closed haul loop")
            return seen
        pos[nxt] = len(seen)
        seen.append(nxt)
        cur = nxt


def build_quarry(config: QuarryConfig) -> QuarryModel:
    config.validate()
    net, layout = synthesize(config.graph, config.radius, config.rules, config.lane_change_p)
    n = len(net)
    excavators = {}
    for site in config.excavators:
        c = _resolve(site.cell, layout, n)
        if c in excavators:
            raise InvalidSite(f"two excavators at cell {c}")
        excavators[c] = site
    dumps = [_resolve(d, layout, n) for d in config.dumps]
    if set(dumps) & set(excavators):
        raise InvalidSite("a dump site coincides with an excavator")
    kinds = [(c, Turnstile(s.loading_time)) for c, s in excavators.items()]
    entrance = exit_cell = None
    if isinstance(config.boundary, OpenBoundary):
        entrance = _resolve(config.boundary.entrance, layout, n)
        exit_cell = _resolve(config.boundary.exit, layout, n)
        gen = Generator(config.boundary.function, empty_tipper(0), serial_key=TIPPER)
        kinds.append((entrance, gen))
        kinds.extend((d, OUTFLOW) for d in dict.fromkeys(dumps + [exit_cell]))
    net = mark_special_cells(net, kinds)

    if isinstance(config.boundary, ClosedLoop):
        first = next(iter(excavators))
        cycle = haul_cycle(net, first)
        count = config.boundary.tippers
        if count > len(cycle):
            raise InvalidConfig(f"{count} tippers do not fit on a loop of {len(cycle)} cells")
        order = cycle[1:] + cycle[:1]
        cells = [order[(i * len(order)) // count] for i in range(count)]
        state = NetState.discrete(net, {c: empty_tipper(i) for i, c in enumerate(cells)})
    else:
        state = NetState.discrete(net)
    return QuarryModel(net, state, excavators, dumps, exit_cell, entrance)


def run_quarry(config: QuarryConfig, steps: int, seed: int = 0, stride: int = 1):
    """Build and simulate the scenario. Returns ``(model, trace)``."""
    model = build_quarry(config)
    closed = isinstance(config.boundary, ClosedLoop)
    effects = QuarryEffects(
        {c: s.template for c, s in model.excavators.items()},
        model.dumps if closed else (),
        config.rates,
    )
    trace = run(
        model.net, model.state, config.theta, DISCRETE, steps, seed,
        stride=stride, effects=effects,
    )
    return model, trace


@dataclass
class QuarryMetrics:
    steps: int
    loads_completed: int
    loads_per_step: float
    mean_cycle_time: float
    delivered_volume: float
    throughput: float
    delivered_by_component: dict
    utilization: dict  # excavator cell -> closed fraction
    mean_queue_length: dict  # excavator cell -> mean blocked arrivals per step

    def rows(self) -> list:
        out = [
            ("steps", self.steps),
            ("loads_completed", self.loads_completed),
            ("loads_per_step", self.loads_per_step),
            ("mean_cycle_time", self.mean_cycle_time),
            ("delivered_volume", self.delivered_volume),
            ("throughput", self.throughput),
        ]
        out.extend((f"delivered[{c}]", v) for c, v in self.delivered_by_component.items())
        out.extend((f"utilization[{c}]", v) for c, v in self.utilization.items())
        out.extend((f"mean_queue_length[{c}]", v) for c, v in self.mean_queue_length.items())
        return out


def _upstream(net: NetTopology, site: int, stop: set) -> set:
    preds = {i: [] for i in range(len(net))}
    for u, targets in enumerate(net.successors):
        for v in targets:
            if v is not None:
                preds[v].append(u)
    seen, todo = {site}, [site]
    while todo:
        for u in preds[todo.pop()]:
            if u not in seen and u not in stop:
                seen.add(u)
                todo.append(u)
    return seen


def compute_metrics(trace: Trace, config: QuarryConfig, model: Optional[QuarryModel] = None) -> QuarryMetrics:
    """Flow characteristics of a quarry trace; a pure function of the trace."""
    if trace.steps <= 0:
        raise EmptyTrace("trace has no steps")
    model = model or build_quarry(config)
    net = model.net
    excavators = sorted(model.excavators)
    dumps = set(model.dumps)
    steps = trace.steps

    opened = [e for e in trace.events if e.kind == TURNSTILE_OPENED and e.cell in model.excavators]
    last_open = {}
    cycles = []
    for e in opened:
        tid = e.payload.get(TIPPER) if e.payload else None
        if tid in last_open:
            cycles.append(e.step - last_open[tid])
        last_open[tid] = e.step
    mean_cycle = math.fsum(cycles) / len(cycles) if cycles else math.nan

    if isinstance(config.boundary, ClosedLoop):
        deliveries = [e.payload for e in trace.events
                      if e.kind == MOVED and e.target in dumps and e.payload]
    else:
        deliveries = [e.payload for e in trace.events
                      if e.kind == ABSORBED and e.cell in dumps and e.payload]
    deliveries = [p for p in deliveries if p.get(VOLUME, 0.0) > 0]
    delivered = math.fsum(p[VOLUME] for p in deliveries)
    by_component = {}
    for comp in COMPONENTS:
        key = composition_key(comp)
        by_component[comp] = math.fsum(p[VOLUME] * p.get(key, 0.0) for p in deliveries)
    extra = sorted({k[len(COMPOSITION_PREFIX):] for p in deliveries for k in p
                    if k.startswith(COMPOSITION_PREFIX)} - set(COMPONENTS))
    for comp in extra:
        key = composition_key(comp)
        by_component[comp] = math.fsum(p[VOLUME] * p.get(key, 0.0) for p in deliveries)

    utilization = {}
    for k in excavators:
        closed_at, total = None, 0
        for e in trace.events:
            if e.cell != k:
                continue
            if e.kind == TURNSTILE_CLOSED:
                closed_at = e.step
            elif e.kind == TURNSTILE_OPENED and closed_at is not None:
                total += e.step - closed_at
                closed_at = None
        if closed_at is not None:
            total += steps - closed_at
        utilization[k] = total / steps

    stop = dumps | set(excavators)
    queue = {}
    for k in excavators:
        region = _upstream(net, k, stop - {k})
        n_blocked = sum(
            1 for e in trace.events
            if e.kind == BLOCKED and e.reason in (OCCUPIED, CLOSED) and e.target in region
        )
        queue[k] = n_blocked / steps

    return QuarryMetrics(
        steps=steps,
        loads_completed=len(opened),
        loads_per_step=len(opened) / steps,
        mean_cycle_time=mean_cycle,
        delivered_volume=delivered,
        throughput=delivered / steps,
        delivered_by_component=by_component,
        utilization=utilization,
        mean_queue_length=queue,
    )
