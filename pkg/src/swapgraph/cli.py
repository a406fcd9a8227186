"""Command-line front end.

Subcommands: ``generate``, ``rewrite``, ``simulate``, ``report``,
``export-dot``.  Graphs and reports travel through files; stdout carries the
human-readable summary, logs go to stderr.  Set ``SWAPGRAPH_LOG`` to
``quiet``, ``info`` or ``debug`` to pick the log level.  Exit code is 0 only
when the command succeeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import generate, serialize
from .graph import topo_order, validate
from .rewriter import RewriteConfig, RewriteError, rewrite
from .sim import DeadlockError, SimConfig, simulate

log = logging.getLogger("swapgraph")

_LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    raw = os.environ.get("SWAPGRAPH_LOG", "quiet").lower()
    level = _LOG_LEVELS.get(raw)
    if level is None:
        print(f"warning: SWAPGRAPH_LOG={raw!r} not one of quiet/info/debug",
              file=sys.stderr)
        level = logging.ERROR
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _scope_set(raw: str | None) -> frozenset[str]:
    if not raw:
        return frozenset()
    return frozenset(s for s in (part.strip() for part in raw.split(",")) if s)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swapgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="emit a synthetic training graph")
    gen.add_argument("--topology", choices=sorted(generate.TOPOLOGIES), required=True)
    gen.add_argument("--size", type=int, required=True,
                     help="layers / depth / blocks depending on topology")
    gen.add_argument("--tensor-bytes", type=int, default=1 << 20)
    gen.add_argument("-o", "--output", required=True, help="graph JSON path")

    rew = sub.add_parser("rewrite", help="insert swap-out/swap-in pairs")
    rew.add_argument("-i", "--input", required=True)
    rew.add_argument("-o", "--output", required=True)
    rew.add_argument("--report", help="write the rewrite report JSON here")
    rew.add_argument("--optimizer-scopes", default="",
                     help="comma-separated scope prefixes that tag backward/update phases")
    rew.add_argument("--starting-scope")
    rew.add_argument("--starting-op-names", default="")
    rew.add_argument("--excl-scopes", default="")
    rew.add_argument("--incl-scopes", default="")
    rew.add_argument("--excl-types", default="")
    rew.add_argument("--incl-types", default="")
    rew.add_argument("--n-tensors", type=int, default=-1)
    rew.add_argument("--lb", type=int, default=1)
    rew.add_argument("--ub", type=int, default=10000)
    rew.add_argument("--ctrld-strategy", choices=["chain_rule", "direct_order"],
                     default="chain_rule")
    rew.add_argument("--fuse-swapins", action=argparse.BooleanOptionalAction, default=False)
    rew.add_argument("--swapin-fuse-distance", type=int, default=1)
    rew.add_argument("--swap-branches", action=argparse.BooleanOptionalAction, default=False)
    rew.add_argument("--branch-threshold", type=int, default=0)

    simp = sub.add_parser("simulate", help="simulate memory use and timing")
    simp.add_argument("-i", "--input", required=True)
    simp.add_argument("-o", "--output", required=True, help="simulation report JSON path")
    simp.add_argument("--device-capacity-bytes", type=int, default=16 * 2**30)
    simp.add_argument("--h2d-bandwidth", type=float, default=float(80 * 2**30))
    simp.add_argument("--d2h-bandwidth", type=float, default=float(80 * 2**30))
    simp.add_argument("--overlap-transfers", action=argparse.BooleanOptionalAction,
                      default=True)
    simp.add_argument("--serial", action="store_true",
                      help="single engine, instantaneous transfers")
    simp.add_argument("--trace-csv", help="also write the event trace as CSV")

    rep = sub.add_parser("report", help="compare two simulation reports")
    rep.add_argument("baseline")
    rep.add_argument("candidate")
    rep.add_argument("--json", action="store_true",
                     help="print the comparison as JSON instead of text")

    dot = sub.add_parser("export-dot", help="render a graph to Graphviz DOT")
    dot.add_argument("-i", "--input", required=True)
    dot.add_argument("-o", "--output", required=True)

    return parser


def _load_graph_checked(path: str):
    g = serialize.load_graph(path)
    problems = validate(g)
    if problems:
        lines = "\n".join(f"  {v.code}: {v.message}" for v in problems)
        raise ValueError(f"{path}: graph is invalid:\n{lines}")
    return g


def _cmd_generate(args) -> int:
    fn = generate.TOPOLOGIES[args.topology]
    g = fn(args.size, tensor_bytes=args.tensor_bytes)
    serialize.save_graph(g, args.output)
    print(f"wrote {args.topology} graph: {len(g.nodes)} nodes, "
          f"{len(g.edges)} edges, {len(g.tensors)} tensors -> {args.output}")
    return 0


def _cmd_rewrite(args) -> int:
    g = _load_graph_checked(args.input)
    cfg = RewriteConfig(
        optimizer_scopes=_scope_set(args.optimizer_scopes),
        starting_scope=args.starting_scope,
        starting_op_names=_scope_set(args.starting_op_names),
        excl_scopes=_scope_set(args.excl_scopes),
        incl_scopes=_scope_set(args.incl_scopes),
        excl_types=_scope_set(args.excl_types),
        incl_types=_scope_set(args.incl_types),
        n_tensors=args.n_tensors,
        lb=args.lb,
        ub=args.ub,
        ctrld_strategy=args.ctrld_strategy,
        fuse_swapins=args.fuse_swapins,
        swapin_fuse_distance=args.swapin_fuse_distance,
        swap_branches=args.swap_branches,
        branch_threshold=args.branch_threshold,
    )
    out, report = rewrite(g, cfg)
    serialize.save_graph(out, args.output)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    print(f"tensors_swapped: {report.tensors_swapped}")
    print(f"swap_outs: {report.swap_outs_added}")
    print(f"swap_ins: {report.swap_ins_added}")
    print(f"control_edges: {report.control_edges_added}")
    return 0


def _cmd_simulate(args) -> int:
    g = _load_graph_checked(args.input)
    if args.serial:
        cfg = SimConfig.serial_oracle(device_capacity_bytes=args.device_capacity_bytes)
    else:
        cfg = SimConfig(
            device_capacity_bytes=args.device_capacity_bytes,
            host_to_device_bandwidth=args.h2d_bandwidth,
            device_to_host_bandwidth=args.d2h_bandwidth,
            overlap_transfers=args.overlap_transfers,
        )
    report = simulate(g, topo_order(g), cfg)
    with open(args.output, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    if args.trace_csv:
        serialize.write_trace_csv(report.event_trace, args.trace_csv)
    print(f"peak_device_bytes: {report.peak_device_bytes}")
    print(f"peak_host_bytes: {report.peak_host_bytes}")
    print(f"makespan: {report.makespan}")
    print(f"transfer_time_total: {report.transfer_time_total}")
    print(f"transfer_wait_total: {report.transfer_wait_total}")
    print(f"oom: {report.oom}")
    return 0


def _cmd_report(args) -> int:
    with open(args.baseline) as fh:
        base = json.load(fh)
    with open(args.candidate) as fh:
        cand = json.load(fh)

    def ratio(a, b):
        return a / b if b else float("inf")

    peak_ratio = ratio(base["peak_device_bytes"], cand["peak_device_bytes"])
    comparison = {
        "device_peak_baseline": base["peak_device_bytes"],
        "device_peak_candidate": cand["peak_device_bytes"],
        "device_peak_ratio": peak_ratio,
        "host_peak_baseline": base["peak_host_bytes"],
        "host_peak_candidate": cand["peak_host_bytes"],
        "makespan_baseline": base["makespan"],
        "makespan_candidate": cand["makespan"],
        "makespan_overhead": cand["makespan"] - base["makespan"],
        "transfer_time_baseline": base["transfer_time_total"],
        "transfer_time_candidate": cand["transfer_time_total"],
        "transfer_wait_baseline": base.get("transfer_wait_total", 0.0),
        "transfer_wait_candidate": cand.get("transfer_wait_total", 0.0),
    }
    if args.json:
        print(json.dumps(comparison, sort_keys=True, indent=2))
        return 0
    print(f"device peak: {base['peak_device_bytes']} -> {cand['peak_device_bytes']} bytes")
    print(f"device_peak_ratio: {peak_ratio:.2f}x")
    print(f"host peak: {base['peak_host_bytes']} -> {cand['peak_host_bytes']} bytes")
    print(f"makespan: {base['makespan']} -> {cand['makespan']} "
          f"(overhead {comparison['makespan_overhead']:+g})")
    print(f"transfer time: {base['transfer_time_total']} -> {cand['transfer_time_total']}")
    return 0


def _cmd_export_dot(args) -> int:
    g = _load_graph_checked(args.input)
    dot = serialize.to_dot(g, topo_order(g))
    with open(args.output, "w") as fh:
        fh.write(dot)
    print(f"wrote DOT for {len(g.nodes)} nodes -> {args.output}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "rewrite": _cmd_rewrite,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
    "export-dot": _cmd_export_dot,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (serialize.GraphFormatError, RewriteError, DeadlockError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
