"""Command-line entry point: ``qcnet <command> ...``.

Exit status is 0 on success, 1 when an input fails validation and 2 on a
usage error. Relative output paths are resolved against ``$QCNET_OUTPUT_DIR``
when it is set.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import formats
from .circulation import CONTINUOUS, DISCRETE, LOWEST_ID, RANDOM, STRICT, VACATING, NetState, run
from .errors import (
    DegenerateEdge,
    DocumentSyntaxError,
    HashMismatch,
    InvalidConfig,
    QCNetError,
    UnreachableBranch,
    ValidationFailed,
)
from .net_core import validate_static_structure
from .quarry import build_quarry, compute_metrics, run_quarry
from .render import FORMATS, render_frames
from .synthesis import build_from_graph

OUTPUT_DIR_ENV = "QCNET_OUTPUT_DIR"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2

# Errors that mean "the input is wrong" rather than "the invocation is wrong".
INVALID_INPUT = (
    ValidationFailed,
    DegenerateEdge,
    UnreachableBranch,
    DocumentSyntaxError,
    InvalidConfig,
    HashMismatch,
)


class UsageError(Exception):
    pass


def output_path(path: str) -> str:
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, text: str) -> str:
    path = output_path(path)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


# --- commands -----------------------------------------------------------------


def cmd_build(args) -> int:
    graph, rules = formats.parse_graph(_read(args.graph))
    net = build_from_graph(graph, args.radius, rules, lane_change_p=args.lane_change_p)
    report = validate_static_structure(net)
    path = _write(args.output, formats.serialize_net(net))
    print(f"{path}: {len(net)} cells; {report.summary()}")
    return EXIT_OK if report.valid else EXIT_INVALID


def cmd_validate(args) -> int:
    net = formats.parse_net(_read(args.net), strict=False)
    report = validate_static_structure(net)
    for line in report.lines():
        print(line)
    print(report.summary())
    return EXIT_OK if report.valid else EXIT_INVALID


def cmd_simulate(args) -> int:
    net = formats.parse_net(_read(args.net))
    if args.state:
        state = formats.parse_state(_read(args.state), net)
        if state.mode != args.mode:
            raise UsageError(f"--mode {args.mode} does not match the {state.mode} state file")
    elif args.mode == DISCRETE:
        state = NetState.discrete(net)
    else:
        state = NetState.continuous(net)
    trace = run(
        net, state, args.theta, args.mode, args.steps, args.seed,
        stride=args.stride, delta=args.delta, conflict=args.conflict, occupancy=args.occupancy,
    )
    path = _write(args.trace, formats.export_trace(trace, args.stride, net))
    print(f"{path}: {args.steps} steps, {len(trace.events)} events")
    return EXIT_OK


def cmd_render(args) -> int:
    net = formats.parse_net(_read(args.net))
    trace = formats.import_trace(_read(args.trace), net)
    out_dir = output_path(os.path.join(args.out_dir, ""))
    paths = render_frames(net, trace, args.format, out_dir, args.px_per_radius)
    print(f"{len(paths)} frames written to {out_dir}")
    return EXIT_OK


def cmd_quarry(args) -> int:
    cfg, options = formats.parse_config(_read(args.config))
    steps = args.steps if args.steps is not None else options.get("steps", 10_000)
    seed = args.seed if args.seed is not None else options.get("seed", 0)
    model, trace = run_quarry(cfg, steps, seed, args.stride)
    _write(args.trace, formats.export_trace(trace, args.stride, model.net))
    metrics = compute_metrics(trace, cfg, model)
    path = _write(args.metrics, formats.serialize_metrics(metrics.rows()))
    print(f"{path}: {metrics.loads_completed} loads in {steps} steps")
    return EXIT_OK


def cmd_metrics(args) -> int:
    cfg, _ = formats.parse_config(_read(args.config))
    model = build_quarry(cfg)
    trace = formats.import_trace(_read(args.trace), model.net)
    metrics = compute_metrics(trace, cfg, model)
    _write(args.output, formats.serialize_metrics(metrics.rows()))
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcnet", description="Quasi cellular net builder and simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="compile a graph file into a net file")
    b.add_argument("graph")
    b.add_argument("--radius", "-R", type=_positive_float, required=True)
    b.add_argument("--lane-change-p", type=float, default=0.1)
    b.add_argument("--output", "-o", required=True)
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("validate", help="check a net file")
    v.add_argument("net")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="run a net and write its trace")
    s.add_argument("net")
    s.add_argument("--steps", type=_nonneg_int, required=True)
    s.add_argument("--theta", type=_positive_float, default=1.0)
    s.add_argument("--mode", choices=(DISCRETE, CONTINUOUS), default=DISCRETE)
    s.add_argument("--delta", type=_positive_float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stride", type=_positive_int, default=1)
    s.add_argument("--state", help="initial state file (default: empty)")
    s.add_argument("--conflict", choices=(LOWEST_ID, RANDOM), default=LOWEST_ID)
    s.add_argument("--occupancy", choices=(VACATING, STRICT), default=VACATING)
    s.add_argument("--trace", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("render", help="draw one frame per trace snapshot")
    r.add_argument("net")
    r.add_argument("trace")
    r.add_argument("--format", choices=FORMATS, default="pgm")
    r.add_argument("--px-per-radius", type=_positive_float, default=None)
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_render)

    q = sub.add_parser("quarry", help="simulate a quarry haulage scenario")
    q.add_argument("config")
    q.add_argument("--steps", type=_nonneg_int, default=None)
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--stride", type=_positive_int, default=1)
    q.add_argument("--trace", required=True)
    q.add_argument("--metrics", required=True)
    q.set_defaults(func=cmd_quarry)

    m = sub.add_parser("metrics", help="recompute quarry metrics from a trace")
    m.add_argument("trace")
    m.add_argument("--config", required=True)
    m.add_argument("--output", "-o", required=True)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except INVALID_INPUT as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, QCNetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
