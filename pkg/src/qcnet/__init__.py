"""Quasi cellular nets for traffic modeling."""

from .circulation import (
    CONTINUOUS,
    DISCRETE,
    ConstraintHook,
    NetState,
    Simulation,
    SimulationClock,
    Trace,
    TraceEvent,
    run,
)
from .errors import QCNetError
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
    neighbor_predicate,
    validate_static_structure,
)
from .synthesis import BasicGraph, BranchRule, Edge, build_from_graph, synthesize

__version__ = "0.1.0"
