"""Stepping a quasi cellular net through simulation time.

Discrete mode moves tokens (transitable states carrying a payload) between
neighboring cells; continuous mode moves real-valued levels along the
directed successor links. Both modes are synchronous: every decision in a
step reads the state at time ``t`` and the effects land together at
``t + theta``.

Discrete step pipeline, fixed for determinism:

1. generator arrivals
2. turnstile close/open updates
3. proposals (direction sampling, dangling / closed-turnstile / hook checks)
4. conflict resolution (one winner per target)
5. apply accepted moves
6. outflow absorption
7. clock advance
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ModeMismatch, NoDirections, StopBeforeStart
from .net_core import (
    Cell,
    DirectionVector,
    Generator,
    NetTopology,
    Outflow,
    Turnstile,
)

DISCRETE = "discrete"
CONTINUOUS = "continuous"
MODES = (DISCRETE, CONTINUOUS)

TRANSITABLE = "S"
NON_TRANSITABLE = "N"

MOVED = "moved"
BLOCKED = "blocked"
GENERATED = "generated"
ABSORBED = "absorbed"
TURNSTILE_CLOSED = "turnstile_closed"
TURNSTILE_OPENED = "turnstile_opened"
EVENT_KINDS = (MOVED, BLOCKED, GENERATED, ABSORBED, TURNSTILE_CLOSED, TURNSTILE_OPENED)

# blocked reasons
OCCUPIED = "occupied"
CONFLICT = "conflict"
DANGLING = "dangling"
NO_DIRECTION = "no_direction"
CLOSED = "turnstile_closed"
HELD = "held"

# Occupancy policies. "vacating" lets a token enter a cell whose occupant
# leaves in the same step; "strict" requires the target to be empty at t.
VACATING = "vacating"
STRICT = "strict"

LOWEST_ID = "lowest_id"
RANDOM = "random"

COMPOSITION_PREFIX = "composition."


@dataclass
class SimulationClock:
    theta: float = 1.0
    step_index: int = 0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def t(self) -> float:
        return self.step_index * self.theta

    def advance(self):
        self.step_index += 1


@dataclass(frozen=True)
class ConstraintHook:
    """Named rule consulted for every proposed discrete move.

    ``rule(net, state, src, dst)`` returns True to allow the move.
    """

    name: str
    rule: Callable

    def allows(self, net, state, src: int, dst: int) -> bool:
        return bool(self.rule(net, state, src, dst))


@dataclass(frozen=True)
class TraceEvent:
    step: int
    kind: str
    cell: int
    target: Optional[int] = None
    reason: Optional[str] = None
    amount: Optional[float] = None
    payload: Optional[dict] = None


@dataclass(frozen=True)
class CellState:
    """Read-only view of one cell's state."""

    tag: Optional[str] = None
    payload: Optional[dict] = None
    level: Optional[float] = None

    @property
    def transitable(self) -> bool:
        return self.tag == TRANSITABLE


def validate_payload(payload: Mapping[str, float]) -> dict:
    out = {}
    for k, v in payload.items():
        v = float(v)
        if not math.isfinite(v):
            raise ValueError(f"payload attribute {k!r} is not finite")
        out[str(k)] = v
    fractions = [v for k, v in out.items() if k.startswith(COMPOSITION_PREFIX)]
    if fractions:
        if any(not 0.0 <= f <= 1.0 for f in fractions):
            raise ValueError("composition fractions must lie in [0, 1]")
        if abs(math.fsum(fractions) - 1.0) > 1e-9:
            raise ValueError("composition fractions must sum to 1")
    return out


@dataclass
class TurnstileState:
    closed_at: Optional[int] = None  # step index t_m, None while open
    released: bool = False  # holding a token that already served its delay

    @property
    def open_flag(self) -> bool:
        return self.closed_at is None


@dataclass
class NetState:
    """Mutable per-run state: occupancy or level per cell, plus kind bookkeeping.

    Discrete mode keeps ``occ[i]`` = token id or -1 and a token table of
    payloads; continuous mode keeps ``levels``.
    """

    mode: str
    occ: Optional[np.ndarray] = None
    tokens: dict = field(default_factory=dict)
    next_token: int = 0
    levels: Optional[np.ndarray] = None
    queues: dict = field(default_factory=dict)
    turnstiles: dict = field(default_factory=dict)
    serials: dict = field(default_factory=dict)
    generated: float = 0
    absorbed: float = 0
    absorbed_by_cell: dict = field(default_factory=dict)
    absorbed_totals: dict = field(default_factory=dict)

    @classmethod
    def discrete(cls, net: NetTopology, tokens=()) -> NetState:
        """``tokens``: iterable of cell ids, or mapping cell id -> payload."""
        st = cls(mode=DISCRETE, occ=np.full(len(net), -1, dtype=np.int64))
        if not isinstance(tokens, Mapping):
            tokens = {int(c): {} for c in tokens}
        for cell, payload in sorted(tokens.items()):
            if st.occ[cell] >= 0:
                raise ValueError(f"cell {cell} already holds a token")
            st.occ[cell] = st.new_token(payload)
        st._init_kind_state(net)
        return st

    @classmethod
    def continuous(cls, net: NetTopology, levels=None) -> NetState:
        arr = np.zeros(len(net), dtype=float)
        if isinstance(levels, Mapping):
            for cell, v in levels.items():
                arr[int(cell)] = float(v)
        elif levels is not None:
            arr[:] = np.asarray(levels, dtype=float)
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("continuous levels must be finite and >= 0")
        st = cls(mode=CONTINUOUS, levels=arr)
        st._init_kind_state(net)
        return st

    def _init_kind_state(self, net: NetTopology):
        for c in net.cells:
            if isinstance(c.kind, Generator):
                self.queues.setdefault(c.id, 0)
                self.serials.setdefault(c.id, 0)
            elif isinstance(c.kind, Turnstile):
                self.turnstiles.setdefault(c.id, TurnstileState())

    def new_token(self, payload) -> int:
        tid = self.next_token
        self.next_token += 1
        self.tokens[tid] = validate_payload(payload)
        return tid

    def copy(self) -> NetState:
        return copy.deepcopy(self)

    def __len__(self):
        return len(self.occ) if self.mode == DISCRETE else len(self.levels)

    def is_transitable(self, cell: int) -> bool:
        return self.mode == DISCRETE and self.occ[cell] >= 0

    def payload(self, cell: int) -> Optional[dict]:
        t = self.occ[cell]
        return None if t < 0 else self.tokens[int(t)]

    def cell_state(self, cell: int) -> CellState:
        if self.mode == CONTINUOUS:
            return CellState(level=float(self.levels[cell]))
        p = self.payload(cell)
        if p is None:
            return CellState(tag=NON_TRANSITABLE)
        return CellState(tag=TRANSITABLE, payload=dict(p))

    def transitable_count(self) -> int:
        return int(np.count_nonzero(self.occ >= 0))

    def total_level(self) -> float:
        return math.fsum(self.levels.tolist())

    def snapshot(self) -> tuple:
        if self.mode == CONTINUOUS:
            return tuple(float(v) for v in self.levels)
        tokens = self.tokens
        return tuple(None if t < 0 else dict(tokens[t]) for t in self.occ.tolist())


class StepEffects:
    """Payload side effects applied inside the discrete pipeline.

    The default leaves payloads untouched. Implementations return a new
    dict instead of mutating the one they receive.
    """

    def on_opened(self, cell: int, payload: dict, step: int) -> dict:
        return payload

    def on_moved(self, src: int, dst: int, payload: dict, step: int) -> dict:
        return payload

    def on_blocked(self, cell: int, payload: dict, step: int) -> dict:
        return payload


class CompiledNet:
    """Flat arrays derived from a topology for fast stepping."""

    def __init__(self, net: NetTopology, theta: float = 1.0):
        self.net = net
        n = self.n = len(net)
        counts = np.array([len(c.directions) for c in net.cells], dtype=np.int64)
        self.ndirs = counts
        self.dir_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.dir_ptr[1:])
        targets, cum, owner, probs = [], [], [], []
        for c, succ in zip(net.cells, net.successors):
            acc = 0.0
            for k, (d, v) in enumerate(zip(c.directions, succ)):
                acc += d.p
                targets.append(-1 if v is None else v)
                cum.append(1.0 if k == len(c.directions) - 1 else acc)
                owner.append(c.id)
                probs.append(d.p)
        self.dir_target = np.array(targets, dtype=np.int64)
        self.dir_cum = np.array(cum, dtype=float)
        self.dir_owner = np.array(owner, dtype=np.int64)
        self.dir_p = np.array(probs, dtype=float)
        self._dir_key = self.dir_owner + self.dir_cum

        live = self.dir_target >= 0
        self.link_src = self.dir_owner[live]
        self.link_tgt = self.dir_target[live]
        self.link_p = self.dir_p[live]

        self.kinds = [c.kind for c in net.cells]
        self.generators = net.cells_of_kind(Generator)
        self.outflows = net.cells_of_kind(Outflow)
        self.turnstiles = net.cells_of_kind(Turnstile)
        self.is_turnstile = np.zeros(n, dtype=bool)
        self.is_turnstile[self.turnstiles] = True
        self.hold = {}
        for k in self.turnstiles:
            tau = self.kinds[k].tau
            m = self.kinds[k].hold_steps(theta)
            if abs(m * theta - tau) > 1e-9 * max(1.0, tau):
                warnings.warn(
                    f"turnstile {k}: tau={tau} is not a multiple of theta={theta}; "
                    f"rounded up to {m} steps",
                    stacklevel=3,
                )
            self.hold[k] = m

    def sample(self, cells: np.ndarray, rng) -> np.ndarray:
        """Direction index (into the flat arrays) for each cell in ``cells``.

        Cells with a single direction consume no randomness; the rest draw
        one uniform each, in the order given.
        """
        ptr = self.dir_ptr[cells]
        cnt = self.ndirs[cells]
        out = ptr.copy()
        multi = cnt > 1
        if np.any(multi):
            mc = cells[multi]
            u = rng.random(len(mc))
            idx = np.searchsorted(self._dir_key, mc + u, side="right")
            last = ptr[multi] + cnt[multi] - 1
            out[multi] = np.clip(idx, ptr[multi], last)
        return out


# --- single-cell operations -------------------------------------------------


def choose_direction(cell: Cell, rng) -> DirectionVector:
    """Inverse-CDF draw over the cell's ordered direction list."""
    dirs = cell.directions
    if not dirs:
        raise NoDirections(f"cell {cell.id} has no directions")
    if len(dirs) == 1:
        return dirs[0]
    u = rng.random()
    acc = 0.0
    for d in dirs[:-1]:
        acc += d.p
        if u < acc:
            return d
    return dirs[-1]


def update_generator(net: NetTopology, state: NetState, cell: int, step: int) -> list:
    """Add f(t) at generator ``cell``.

    Discrete arrivals enqueue; one queued arrival materializes as a token
    whenever the cell is clear.
    """
    g = net.cells[cell].kind
    amount = g.function.at(step)
    events = []
    if state.mode == CONTINUOUS:
        if amount:
            state.levels[cell] += amount
            state.generated += amount
            events.append(TraceEvent(step, GENERATED, cell, amount=float(amount)))
        return events
    state.queues[cell] += int(amount)
    if state.occ[cell] < 0 and state.queues[cell] > 0:
        state.queues[cell] -= 1
        payload = dict(g.template)
        if g.serial_key:
            payload[g.serial_key] = state.serials[cell]
            state.serials[cell] += 1
        tid = state.new_token(payload)
        state.occ[cell] = tid
        state.generated += 1
        events.append(TraceEvent(step, GENERATED, cell, payload=dict(state.tokens[tid])))
    return events


def update_outflow(state: NetState, cell: int, step: int) -> list:
    """Reset an outflow to the clear state, recording what it absorbed."""
    if state.mode == CONTINUOUS:
        level = float(state.levels[cell])
        if level == 0.0:
            return []
        state.levels[cell] = 0.0
        state.absorbed += level
        state.absorbed_by_cell[cell] = state.absorbed_by_cell.get(cell, 0.0) + level
        return [TraceEvent(step, ABSORBED, cell, amount=level)]
    tid = int(state.occ[cell])
    if tid < 0:
        return []
    payload = state.tokens.pop(tid)
    state.occ[cell] = -1
    state.absorbed += 1
    state.absorbed_by_cell[cell] = state.absorbed_by_cell.get(cell, 0) + 1
    for k, v in payload.items():
        state.absorbed_totals[k] = state.absorbed_totals.get(k, 0.0) + v
    return [TraceEvent(step, ABSORBED, cell, payload=dict(payload))]


def update_turnstile(state: NetState, cell: int, step: int, hold: int, effects=None) -> list:
    """Close on a fresh arrival; reopen once ``hold`` steps have elapsed."""
    ts = state.turnstiles[cell]
    tid = int(state.occ[cell])
    if ts.closed_at is None:
        if tid >= 0 and not ts.released:
            ts.closed_at = step
            return [TraceEvent(step, TURNSTILE_CLOSED, cell, payload=dict(state.tokens[tid]))]
        return []
    if step >= ts.closed_at + hold:
        ts.closed_at = None
        ts.released = True
        if effects is not None:
            state.tokens[tid] = effects.on_opened(cell, state.tokens[tid], step)
        return [TraceEvent(step, TURNSTILE_OPENED, cell, payload=dict(state.tokens[tid]))]
    return []


# --- proposal, conflicts, settling ------------------------------------------


@dataclass
class Proposals:
    src: np.ndarray
    tgt: np.ndarray
    dir_index: np.ndarray
    # blocked at proposal time: parallel arrays of (cell, reason, target)
    blocked: list = field(default_factory=list)

    def pairs(self) -> list:
        return list(zip(self.src.tolist(), self.tgt.tolist()))


def _closed_mask(compiled: CompiledNet, state: NetState) -> np.ndarray:
    closed = np.zeros(compiled.n, dtype=bool)
    for k, ts in state.turnstiles.items():
        if ts.closed_at is not None:
            closed[k] = True
    return closed


def _propose(compiled: CompiledNet, state: NetState, rng, hooks=(), occupancy=VACATING) -> Proposals:
    occ = state.occ
    closed = _closed_mask(compiled, state)
    movers = np.flatnonzero(occ >= 0)
    blocked = []
    held = movers[closed[movers]]
    blocked.extend((int(c), HELD, None) for c in held)
    active = movers[~closed[movers]]
    nodir = active[compiled.ndirs[active] == 0]
    blocked.extend((int(c), NO_DIRECTION, None) for c in nodir)
    active = active[compiled.ndirs[active] > 0]

    di = compiled.sample(active, rng)
    tgt = compiled.dir_target[di]
    dang = tgt < 0
    blocked.extend((int(c), DANGLING, None) for c in active[dang])
    keep = ~dang
    src, tgt, di = active[keep], tgt[keep], di[keep]

    shut = closed[tgt]
    if occupancy == STRICT:
        occupied = (occ[tgt] >= 0) & ~shut
    else:
        occupied = np.zeros(len(tgt), dtype=bool)
    for c, t in zip(src[shut].tolist(), tgt[shut].tolist()):
        blocked.append((c, CLOSED, t))
    for c, t in zip(src[occupied].tolist(), tgt[occupied].tolist()):
        blocked.append((c, OCCUPIED, t))
    keep = ~(shut | occupied)
    src, tgt, di = src[keep], tgt[keep], di[keep]

    if hooks and len(src):
        ok = np.ones(len(src), dtype=bool)
        for i, (u, v) in enumerate(zip(src.tolist(), tgt.tolist())):
            for h in hooks:
                if not h.allows(compiled.net, state, u, v):
                    ok[i] = False
                    blocked.append((u, f"constraint:{h.name}", v))
                    break
        src, tgt, di = src[ok], tgt[ok], di[ok]
    return Proposals(src, tgt, di, blocked)


def propose_discrete_transitions(net, state, clock, rng, hooks=(), occupancy=STRICT) -> Proposals:
    """Proposals for every transitable cell, read from the time-t state.

    With the default strict occupancy a move into a transitable target is
    reported as blocked here; the vacating policy defers that check to
    :func:`settle_moves`.
    """
    _require_mode(state, DISCRETE)
    return _propose(CompiledNet(net, clock.theta), state, rng, hooks, occupancy)


def _winner_mask(src: np.ndarray, tgt: np.ndarray, policy=LOWEST_ID, rng=None) -> np.ndarray:
    m = len(src)
    win = np.zeros(m, dtype=bool)
    if m == 0:
        return win
    if policy == LOWEST_ID:
        order = np.argsort(src, kind="stable")
    elif policy == RANDOM:
        order = rng.permutation(m)
    else:
        raise ValueError(f"unknown conflict policy {policy!r}")
    _, first = np.unique(tgt[order], return_index=True)
    win[order[first]] = True
    return win


def resolve_conflicts(proposals, policy=LOWEST_ID, rng=None):
    """At most one accepted proposal per target cell.

    ``proposals`` is a sequence of ``(src, tgt)`` pairs. Returns
    ``(accepted, losers)``: accepted pairs sorted by source id, and the
    source ids that lost a conflict.
    """
    if not len(proposals):
        return [], []
    arr = np.asarray(proposals, dtype=np.int64).reshape(-1, 2)
    win = _winner_mask(arr[:, 0], arr[:, 1], policy, rng)
    acc = arr[win]
    acc = acc[np.argsort(acc[:, 0], kind="stable")]
    losers = sorted(arr[~win, 0].tolist())
    return [tuple(p) for p in acc.tolist()], losers


def settle_moves(occ: np.ndarray, src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    """Which conflict-free moves can execute under the vacating policy.

    A move is accepted when its target is clear at time t, or when the
    target's occupant itself has an accepted move. Chains are resolved by
    pointer jumping; a closed cycle of fully occupied cells stays put.
    """
    m = len(src)
    if m == 0:
        return np.zeros(0, dtype=bool)
    clear = occ[tgt] < 0
    mover_at = np.full(len(occ), -1, dtype=np.int64)
    mover_at[src] = np.arange(m)
    ptr = mover_at[tgt]
    value = clear.copy()
    resolved = clear | (ptr < 0)
    ptr = np.where(resolved, -1, ptr)
    for _ in range(int(math.ceil(math.log2(m + 1))) + 2):
        todo = np.flatnonzero(~resolved)
        if not len(todo):
            break
        nxt = ptr[todo]
        done = resolved[nxt]
        hit = todo[done]
        value[hit] = value[nxt[done]]
        resolved[hit] = True
        rest = todo[~done]
        ptr[rest] = ptr[nxt[~done]]
    return value & resolved


def _require_mode(state: NetState, mode: str):
    if state.mode != mode:
        raise ModeMismatch(f"state is {state.mode}, step requires {mode}")


# --- the stepper ------------------------------------------------------------


class Simulation:
    """Owns one run: topology, state, clock and random stream."""

    def __init__(
        self,
        net: NetTopology,
        state: NetState,
        theta: float = 1.0,
        seed: int = 0,
        hooks: Sequence[ConstraintHook] = (),
        delta: float = 1.0,
        conflict: str = LOWEST_ID,
        occupancy: str = VACATING,
        effects: Optional[StepEffects] = None,
        record_events: bool = True,
    ):
        if len(state) != len(net):
            raise ValueError("state size does not match the net")
        if occupancy not in (VACATING, STRICT):
            raise ValueError(f"unknown occupancy policy {occupancy!r}")
        if state.mode == CONTINUOUS and not delta > 0:
            raise ValueError("delta must be positive")
        self.net = net
        self.state = state
        self.clock = SimulationClock(theta)
        self.rng = np.random.default_rng(seed)
        self.hooks = tuple(hooks)
        self.delta = delta
        self.conflict = conflict
        self.occupancy = occupancy
        self.effects = effects
        self.record = record_events
        self.compiled = CompiledNet(net, theta)
        if state.mode == DISCRETE:
            for g in self.compiled.generators:
                if not net.cells[g].kind.amounts_are_integral():
                    raise ValueError(f"generator {g}: discrete mode needs whole-token amounts")

    def step(self) -> list:
        if self.state.mode == DISCRETE:
            events = self._discrete_step()
        else:
            events = self._continuous_step()
        self.clock.advance()
        return events

    def _discrete_step(self) -> list:
        cn, st, step = self.compiled, self.state, self.clock.step_index
        fx = self.effects
        events = []
        for g in cn.generators:
            events.extend(update_generator(self.net, st, g, step))
        for k in cn.turnstiles:
            events.extend(update_turnstile(st, k, step, cn.hold[k], fx))

        prop = _propose(cn, st, self.rng, self.hooks, self.occupancy)
        src, tgt = prop.src, prop.tgt
        win = _winner_mask(src, tgt, self.conflict, self.rng)
        blocked = list(prop.blocked)
        for c, t in zip(src[~win].tolist(), tgt[~win].tolist()):
            blocked.append((c, CONFLICT, t))
        src, tgt = src[win], tgt[win]
        if self.occupancy == VACATING:
            ok = settle_moves(st.occ, src, tgt)
            for c, t in zip(src[~ok].tolist(), tgt[~ok].tolist()):
                blocked.append((c, OCCUPIED, t))
            src, tgt = src[ok], tgt[ok]

        occ = st.occ
        moving = occ[src].copy()
        moved_payloads = None
        if self.record:
            moved_payloads = [dict(st.tokens[t]) for t in moving.tolist()]
        occ[src] = -1
        occ[tgt] = moving
        if cn.turnstiles and len(src):
            touched = np.concatenate([src, tgt])
            for k in touched[cn.is_turnstile[touched]].tolist():
                st.turnstiles[k].released = False

        if fx is not None:
            for u, v, t in zip(src.tolist(), tgt.tolist(), moving.tolist()):
                st.tokens[t] = fx.on_moved(u, v, st.tokens[t], step)
            for c, _, _ in blocked:
                t = int(occ[c])
                st.tokens[t] = fx.on_blocked(c, st.tokens[t], step)

        if self.record:
            rows = [(u, 0, TraceEvent(step, MOVED, u, v, payload=p))
                    for u, v, p in zip(src.tolist(), tgt.tolist(), moved_payloads)]
            rows.extend((c, 1, TraceEvent(step, BLOCKED, c, t, reason=r)) for c, r, t in blocked)
            rows.sort(key=lambda r: (r[0], r[1]))
            events.extend(r[2] for r in rows)

        for o in cn.outflows:
            events.extend(update_outflow(st, o, step))
        return events if self.record else []

    def _continuous_step(self) -> list:
        cn, st, step = self.compiled, self.state, self.clock.step_index
        events = []
        for g in cn.generators:
            events.extend(update_generator(self.net, st, g, step))
        lv = st.levels
        n = cn.n
        desired = self.delta * cn.link_p
        out_total = np.bincount(cn.link_src, weights=desired, minlength=n)
        over = out_total > lv
        scale = np.ones(n)
        np.divide(lv, out_total, out=scale, where=over)
        transfer = desired * scale[cn.link_src]
        outsum = np.bincount(cn.link_src, weights=transfer, minlength=n)
        insum = np.bincount(cn.link_tgt, weights=transfer, minlength=n)
        remaining = np.where(over, 0.0, lv - outsum)
        np.maximum(remaining, 0.0, out=remaining)
        st.levels = remaining + insum
        if self.record:
            for u, v, a in zip(cn.link_src.tolist(), cn.link_tgt.tolist(), transfer.tolist()):
                if a > 0:
                    events.append(TraceEvent(step, MOVED, u, v, amount=a))
        for o in cn.outflows:
            events.extend(update_outflow(st, o, step))
        return events if self.record else []


def apply_discrete_step(net, state, clock, rng_seed=0, **kwargs):
    """One discrete step on a copy of ``state``. Returns ``(new_state, events)``."""
    _require_mode(state, DISCRETE)
    sim = Simulation(net, state.copy(), clock.theta, rng_seed, **kwargs)
    sim.clock.step_index = clock.step_index
    events = sim.step()
    return sim.state, events


def apply_continuous_step(net, state, clock, delta, **kwargs):
    """One continuous step on a copy of ``state``. Returns ``(new_state, events)``."""
    _require_mode(state, CONTINUOUS)
    if not delta > 0:
        raise ValueError("delta must be positive")
    sim = Simulation(net, state.copy(), clock.theta, delta=delta, **kwargs)
    sim.clock.step_index = clock.step_index
    events = sim.step()
    return sim.state, events


@dataclass
class Trace:
    """Snapshots (at a stride, plus the final step) and every event of a run."""

    theta: float
    mode: str
    seed: int
    steps: int
    stride: int
    snapshots: list = field(default_factory=list)  # [(step index, snapshot)]
    events: list = field(default_factory=list)
    net: Optional[NetTopology] = field(default=None, compare=False, repr=False)

    def snapshot_steps(self) -> list:
        return [s for s, _ in self.snapshots]

    def snapshot_at(self, step: int):
        for s, snap in self.snapshots:
            if s == step:
                return snap
        raise KeyError(step)

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]


def run(
    net: NetTopology,
    state: NetState,
    theta: float = 1.0,
    mode: Optional[str] = None,
    stop: int = 0,
    seed: int = 0,
    hooks: Iterable[ConstraintHook] = (),
    stride: int = 1,
    **kwargs,
) -> Trace:
    """Advance ``stop`` steps from ``state`` and collect the trace.

    The input state is not modified. Extra keyword arguments go to
    :class:`Simulation` (delta, conflict, occupancy, effects).
    """
    mode = mode or state.mode
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    _require_mode(state, mode)
    if stop < 0:
        raise StopBeforeStart(f"stop={stop} is negative")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    sim = Simulation(net, state.copy(), theta, seed, tuple(hooks), **kwargs)
    trace = Trace(theta, mode, seed, stop, stride, net=net)
    trace.snapshots.append((0, sim.state.snapshot()))
    for k in range(1, stop + 1):
        trace.events.extend(sim.step())
        if k % stride == 0 or k == stop:
            trace.snapshots.append((k, sim.state.snapshot()))
    return trace
