"""Graph rewriting: insert swap-out/swap-in pairs on long-lived tensors.

An edge (u, v) carrying tensor t is rewritten into

    u -> swap_out -> swap_in -> v

where both new nodes live on the host.  The tensor travels to host memory
right after u produces it and returns shortly before v consumes it, so the
device does not hold it across the gap.  Selection, insertion, fusion and
control-edge attachment are separate passes composed by :func:`rewrite`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

from . import control as ctrl
from .graph import (
    HOST,
    CompGraph,
    EdgeAction,
    EdgeRec,
    NodeKind,
    OpNode,
    Phase,
    SWAP_KINDS,
    TensorSpec,
    is_accelerator,
    topo_order,
)

log = logging.getLogger("swapgraph")


class RewriteError(ValueError):
    """A pipeline stage failed; the message names the stage."""


@dataclass(frozen=True)
class RewriteConfig:
    """Tuning knobs for the rewriting pipeline.

    ``optimizer_scopes`` tags untagged nodes with backward/update phases by
    scope prefix; it may be empty when the graph carries explicit phases.
    ``n_tensors`` caps how many distinct tensors are rewritten (-1 = all),
    ``lb``/``ub`` bound the control-operation search, and the remaining
    fields switch on swap fusion and same-phase branch rewriting.
    """

    optimizer_scopes: frozenset[str] = frozenset()
    starting_scope: str | None = None
    starting_op_names: frozenset[str] = frozenset()
    excl_scopes: frozenset[str] = frozenset()
    incl_scopes: frozenset[str] = frozenset()
    excl_types: frozenset[str] = frozenset()
    incl_types: frozenset[str] = frozenset()
    n_tensors: int = -1
    lb: int = 1
    ub: int = 10000
    ctrld_strategy: str = "chain_rule"
    fuse_swapins: bool = False
    swapin_fuse_distance: int = 1
    swap_branches: bool = False
    branch_threshold: int = 0

    def __post_init__(self):
        if self.lb < 1:
            raise ValueError("lb must be positive")
        if self.ub < self.lb:
            raise ValueError("ub must be >= lb")
        if self.n_tensors < -1:
            raise ValueError("n_tensors must be -1 (all) or >= 0")
        if self.ctrld_strategy not in ("chain_rule", "direct_order"):
            raise ValueError(f"unknown ctrld_strategy {self.ctrld_strategy!r}")
        if self.swapin_fuse_distance < 0:
            raise ValueError("swapin_fuse_distance must be >= 0")
        if self.branch_threshold < 0:
            raise ValueError("branch_threshold must be >= 0")


@dataclass
class RewriteReport:
    tensors_swapped: int = 0
    swap_outs_added: int = 0
    swap_ins_added: int = 0
    control_edges_added: int = 0
    edges_rewritten: list[tuple[int, int, int]] = field(default_factory=list)
    skipped: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tensors_swapped": self.tensors_swapped,
            "swap_outs_added": self.swap_outs_added,
            "swap_ins_added": self.swap_ins_added,
            "control_edges_added": self.control_edges_added,
            "edges_rewritten": [list(e) for e in self.edges_rewritten],
            "skipped": self.skipped,
        }


def scope_matches(scope: str, pattern: str) -> bool:
    """Prefix match on scope path components."""
    return scope == pattern or scope.startswith(pattern + "/")


def _in_scopes(scope: str, patterns) -> bool:
    return any(scope_matches(scope, p) for p in patterns)


def _type_matches(node: OpNode, tags) -> bool:
    return node.kind.value in tags or node.name in tags


def resolve_phases(g: CompGraph, optimizer_scopes) -> CompGraph:
    """Fill in unknown phases from optimizer scope membership.

    Explicitly tagged nodes keep their phase.  An untagged node under an
    optimizer scope becomes ``update`` when it writes a variable and
    ``backward`` otherwise; untagged nodes everywhere else become
    ``forward``.  Without optimizer scopes the graph is returned unchanged.
    """
    if not optimizer_scopes:
        return g
    nodes = []
    for n in g.nodes:
        if n.parameterized or n.phase is not Phase.UNKNOWN or n.kind in SWAP_KINDS:
            nodes.append(n)
            continue
        if _in_scopes(n.scope, optimizer_scopes):
            writes_var = any(e.action is EdgeAction.UPDATE for e in g.out_edges(n.id))
            phase = Phase.UPDATE if writes_var else Phase.BACKWARD
        else:
            phase = Phase.FORWARD
        nodes.append(OpNode(n.id, n.name, scope=n.scope, kind=n.kind,
                            parameterized=n.parameterized, phase=phase,
                            device=n.device, cost_hint=n.cost_hint))
    return CompGraph(nodes, g.edges, g.tensors)


def _starting_nodes(g: CompGraph, cfg: RewriteConfig) -> list[int]:
    if cfg.starting_scope is None and not cfg.starting_op_names:
        return sorted(n.id for n in g.nodes if n.parameterized)
    picked: set[int] = set()
    if cfg.starting_scope is not None:
        found = {n.id for n in g.nodes if scope_matches(n.scope, cfg.starting_scope)}
        if not found:
            raise ValueError(f"starting scope {cfg.starting_scope!r} matches no node")
        picked |= found
    if cfg.starting_op_names:
        found = {n.id for n in g.nodes if n.name in cfg.starting_op_names}
        missing = cfg.starting_op_names - {n.name for n in g.nodes}
        if missing:
            raise ValueError(f"starting op names match no node: {sorted(missing)}")
        picked |= found
    return sorted(picked)


def select_candidates(
    g: CompGraph,
    order: dict[int, int],
    cfg: RewriteConfig,
    report: RewriteReport | None = None,
) -> list[tuple[EdgeRec, int]]:
    """Enumerate (edge, tensor) pairs worth rewriting, in discovery order.

    Traversal is breadth-first from the starting nodes (all parameterized
    nodes by default) with siblings visited in ascending node id.  An edge
    qualifies when src and dst are non-parameterized accelerator ops and
    either src's phase is forward while dst's is backward, src matches an
    inclusion filter, or ``swap_branches`` is on and the edge jumps more
    than ``branch_threshold`` order steps between forward ops.  Exclusion
    filters beat inclusion.  ``n_tensors`` >= 0 keeps only the first that
    many distinct tensors.
    """
    candidates: list[tuple[EdgeRec, int]] = []
    kept_tensors: list[int] = []
    seen: set[int] = set()
    queue = list(_starting_nodes(g, cfg))
    seen.update(queue)
    qi = 0
    while qi < len(queue):
        nid = queue[qi]
        qi += 1
        out = sorted(
            (e for e in g.out_edges(nid) if e.action is not EdgeAction.UPDATE),
            key=lambda e: (e.dst, -1 if e.tensor is None else e.tensor),
        )
        for e in out:
            if e.action is EdgeAction.READ:
                verdict = _classify_edge(g, order, cfg, e)
                if verdict == "candidate":
                    tid = e.tensor
                    if tid not in kept_tensors:
                        if cfg.n_tensors >= 0 and len(kept_tensors) >= cfg.n_tensors:
                            if report is not None:
                                report.skipped.append(
                                    {"reason": "over n_tensors cap", "tensor": tid,
                                     "edge": [e.src, e.dst]})
                            continue
                        kept_tensors.append(tid)
                    candidates.append((e, tid))
                elif verdict == "excluded" and report is not None:
                    report.skipped.append(
                        {"reason": "matched exclusion filter", "tensor": e.tensor,
                         "edge": [e.src, e.dst]})
            if e.dst not in seen and e.dst in g.node_by_id:
                seen.add(e.dst)
                queue.append(e.dst)
    return candidates


def _classify_edge(g, order, cfg, e: EdgeRec) -> str:
    src = g.node_by_id.get(e.src)
    dst = g.node_by_id.get(e.dst)
    if src is None or dst is None or e.tensor is None:
        return "no"
    # never rewrite next to a variable, a swap node, or off-accelerator
    if src.parameterized or dst.parameterized:
        return "no"
    if src.kind in SWAP_KINDS or dst.kind in SWAP_KINDS:
        return "no"
    if not is_accelerator(src.device) or not is_accelerator(dst.device):
        return "no"
    phase_hit = src.phase is Phase.FORWARD and dst.phase is Phase.BACKWARD
    branch_hit = (
        cfg.swap_branches
        and src.phase is Phase.FORWARD
        and dst.phase is Phase.FORWARD
        and order[e.dst] - order[e.src] > cfg.branch_threshold
    )
    incl_hit = _in_scopes(src.scope, cfg.incl_scopes) or _type_matches(src, cfg.incl_types)
    if not (phase_hit or branch_hit or incl_hit):
        return "no"
    if _in_scopes(src.scope, cfg.excl_scopes) or _type_matches(src, cfg.excl_types):
        return "excluded"
    return "candidate"


def insert_swap_pair(g: CompGraph, edge: EdgeRec) -> tuple[CompGraph, int, int]:
    """Break one read edge into producer -> swap_out -> swap_in -> consumer.

    Both inserted nodes are host-placed identities; each produces a fresh
    tensor inheriting the original's size and dtype.  Returns the new graph
    with the swap-out and swap-in node ids.
    """
    if edge not in g.edges:
        raise ValueError(f"edge {edge} not present in graph")
    if edge.action is not EdgeAction.READ:
        raise ValueError(f"only read edges can be rewritten, got {edge.action.value}")
    src = g.node_by_id[edge.src]
    dst = g.node_by_id[edge.dst]
    if not (is_accelerator(src.device) and is_accelerator(dst.device)):
        raise ValueError(f"edge {edge.src} -> {edge.dst} is not between accelerator ops")
    t = g.tensor_by_id[edge.tensor]

    so_id = g.max_node_id() + 1
    si_id = so_id + 1
    so_tensor = g.max_tensor_id() + 1
    si_tensor = so_tensor + 1
    so = OpNode(so_id, f"swap_out_{t.id}_{edge.dst}", scope="swap",
                kind=NodeKind.SWAP_OUT, device=HOST, cost_hint=0.0)
    si = OpNode(si_id, f"swap_in_{t.id}_{edge.dst}", scope="swap",
                kind=NodeKind.SWAP_IN, device=HOST, cost_hint=0.0)
    new_tensors = (
        TensorSpec(so_tensor, so_id, size_bytes=t.size_bytes, dtype=t.dtype),
        TensorSpec(si_tensor, si_id, size_bytes=t.size_bytes, dtype=t.dtype),
    )

    edges = list(g.edges)
    edges.remove(edge)
    edges.append(EdgeRec(edge.src, so_id, EdgeAction.READ, t.id))
    edges.append(EdgeRec(so_id, si_id, EdgeAction.READ, so_tensor))
    edges.append(EdgeRec(si_id, edge.dst, EdgeAction.READ, si_tensor))
    out = CompGraph(g.nodes + (so, si), edges, g.tensors + new_tensors)
    return out, so_id, si_id


def _sole_read_input(g: CompGraph, nid: int) -> EdgeRec:
    ins = [e for e in g.in_edges(nid) if e.action is EdgeAction.READ]
    if len(ins) != 1:
        raise ValueError(f"swap node {nid} must have exactly one data input, has {len(ins)}")
    return ins[0]


def _sole_output(g: CompGraph, nid: int) -> TensorSpec:
    produced = g.produced_tensors(nid)
    if len(produced) != 1:
        raise ValueError(f"swap node {nid} must produce exactly one tensor, has {len(produced)}")
    return produced[0]


def fuse_swap_outs(g: CompGraph) -> CompGraph:
    """Merge swap-outs that copy the same tensor; one host copy suffices.

    The lowest-id swap-out of each (producer, tensor) group survives and all
    downstream consumers are rewired onto its output.  Idempotent.
    """
    groups: dict[tuple[int, int], list[int]] = {}
    for n in g.nodes:
        if n.kind is NodeKind.SWAP_OUT:
            src_edge = _sole_read_input(g, n.id)
            groups.setdefault((src_edge.src, src_edge.tensor), []).append(n.id)

    drop_nodes: set[int] = set()
    drop_tensors: set[int] = set()
    rewire: dict[int, tuple[int, int]] = {}  # dropped tensor -> (survivor node, survivor tensor)
    for members in groups.values():
        if len(members) < 2:
            continue
        members.sort()
        survivor = members[0]
        survivor_out = _sole_output(g, survivor)
        for other in members[1:]:
            other_out = _sole_output(g, other)
            drop_nodes.add(other)
            drop_tensors.add(other_out.id)
            rewire[other_out.id] = (survivor, survivor_out.id)
    if not drop_nodes:
        return g

    nodes = [n for n in g.nodes if n.id not in drop_nodes]
    tensors = [t for t in g.tensors if t.id not in drop_tensors]
    edges = []
    for e in g.edges:
        if e.dst in drop_nodes:
            continue  # the dropped node's input edge disappears with it
        if e.src in drop_nodes:
            new_src, new_tensor = rewire[e.tensor]
            edges.append(EdgeRec(new_src, e.dst, e.action, new_tensor))
        else:
            edges.append(e)
    return CompGraph(nodes, edges, tensors)


def fuse_swap_ins(g: CompGraph, order: dict[int, int], distance_threshold: int) -> CompGraph:
    """Merge swap-ins of one swapped tensor whose consumers sit close together.

    Consumers are clustered greedily in ascending order; a cluster only grows
    while every pair stays within ``distance_threshold`` order steps.  Each
    cluster keeps its lowest-id swap-in, which then feeds every consumer in
    the cluster.  Expects swap-outs to be fused already.
    """
    groups: dict[int, list[int]] = {}
    for n in g.nodes:
        if n.kind is NodeKind.SWAP_IN:
            src_edge = _sole_read_input(g, n.id)
            groups.setdefault(src_edge.src, []).append(n.id)

    drop_nodes: set[int] = set()
    drop_tensors: set[int] = set()
    rewire: dict[int, tuple[int, int]] = {}
    for members in groups.values():
        if len(members) < 2:
            continue

        def earliest_consumer_order(si: int) -> int:
            outs = [e for e in g.out_edges(si) if e.action is EdgeAction.READ]
            return min(order[e.dst] for e in outs) if outs else 0

        members.sort(key=lambda si: (earliest_consumer_order(si), si))
        clusters: list[list[int]] = [[members[0]]]
        for si in members[1:]:
            anchor = clusters[-1][0]
            if earliest_consumer_order(si) - earliest_consumer_order(anchor) <= distance_threshold:
                clusters[-1].append(si)
            else:
                clusters.append([si])
        for cluster in clusters:
            if len(cluster) < 2:
                continue
            survivor = min(cluster)
            survivor_out = _sole_output(g, survivor)
            for other in cluster:
                if other == survivor:
                    continue
                other_out = _sole_output(g, other)
                drop_nodes.add(other)
                drop_tensors.add(other_out.id)
                rewire[other_out.id] = (survivor, survivor_out.id)
    if not drop_nodes:
        return g

    nodes = [n for n in g.nodes if n.id not in drop_nodes]
    tensors = [t for t in g.tensors if t.id not in drop_tensors]
    edges = []
    for e in g.edges:
        if e.dst in drop_nodes:
            continue
        if e.src in drop_nodes:
            new_src, new_tensor = rewire[e.tensor]
            edges.append(EdgeRec(new_src, e.dst, e.action, new_tensor))
        else:
            edges.append(e)
    return CompGraph(nodes, edges, tensors)


def _phases_resolvable(g: CompGraph, cfg: RewriteConfig) -> bool:
    if cfg.optimizer_scopes:
        return True
    return any(
        n.phase is not Phase.UNKNOWN for n in g.nodes if not n.parameterized
    )


def rewrite(g: CompGraph, cfg: RewriteConfig) -> tuple[CompGraph, RewriteReport]:
    """Run the full pipeline and return the rewritten graph plus a report.

    Stages: resolve phases, order, select candidates, insert swap pairs,
    fuse swap-outs, optionally fuse swap-ins, attach one control edge per
    swap-in, validate.  Output is deterministic for a given (graph, config),
    inserted node ids included.  Graphs that already contain swap nodes are
    refused; rewriting is a single-shot transformation.
    """
    from .graph import validate  # local import to avoid cycle at module load

    report = RewriteReport()

    if any(n.kind in SWAP_KINDS for n in g.nodes):
        raise RewriteError("stage 'precheck': graph already contains swap nodes; "
                           "rewrite must start from an unrewritten graph")
    if not _phases_resolvable(g, cfg):
        raise RewriteError("stage 'phases': no phase tags and no optimizer_scopes; "
                           "cannot tell forward from backward")

    def stage(name, fn, *args):
        try:
            return fn(*args)
        except RewriteError:
            raise
        except Exception as exc:
            raise RewriteError(f"stage {name!r}: {exc}") from exc

    tagged = stage("phases", resolve_phases, g, cfg.optimizer_scopes)
    base_order = stage("order", topo_order, tagged)
    candidates = stage("select", select_candidates, tagged, base_order, cfg, report)

    cur = tagged
    for edge, tid in candidates:
        cur, _, _ = stage("insert", insert_swap_pair, cur, edge)
        report.edges_rewritten.append((edge.src, edge.dst, tid))

    cur = stage("fuse_swap_outs", fuse_swap_outs, cur)
    if cfg.fuse_swapins:
        cur = stage("fuse_swap_ins", fuse_swap_ins, cur, base_order, cfg.swapin_fuse_distance)

    # orders shift once edges are rewired, so control queries run against the
    # post-fusion graph; all queries share that one graph and ordering so the
    # choice for one swap-in cannot leak into another's search
    if candidates:
        query_graph = cur
        swap_order = stage("order", topo_order, query_graph)
        strategy = ctrl.direct_order if cfg.ctrld_strategy == "direct_order" else ctrl.chain_rule
        for si_id in sorted(n.id for n in query_graph.nodes if n.kind is NodeKind.SWAP_IN):
            so_edge = _sole_read_input(query_graph, si_id)
            consumers = [e.dst for e in query_graph.out_edges(si_id)
                         if e.action is EdgeAction.READ]
            if not consumers:
                report.skipped.append({"reason": "swap-in has no consumer", "node": si_id})
                continue
            target = min(consumers, key=lambda nid: (swap_order[nid], nid))
            query = ctrl.CtrlQuery(source=so_edge.src, target=target, lb=cfg.lb, ub=cfg.ub)
            chosen = stage("ctrl_select", strategy, query_graph, swap_order, query)
            if chosen is None:
                chosen = stage("ctrl_select", ctrl.fallback_control, query_graph, swap_order,
                               so_edge.src, target)
                if chosen is not None:
                    report.skipped.append(
                        {"reason": "strategy found no control op; used fallback",
                         "node": si_id, "control": chosen})
            if chosen is None:
                report.skipped.append(
                    {"reason": "no control op in window; swap-in left eager", "node": si_id})
                continue
            cur = stage("attach_control", ctrl.attach_control, cur, chosen, si_id)
            report.control_edges_added += 1

    problems = stage("validate", validate, cur)
    if problems:
        raise RewriteError(f"stage 'validate': rewritten graph is invalid: {problems[:3]}")

    report.tensors_swapped = len({tid for _, tid in candidates})
    report.swap_outs_added = sum(1 for n in cur.nodes if n.kind is NodeKind.SWAP_OUT)
    report.swap_ins_added = sum(1 for n in cur.nodes if n.kind is NodeKind.SWAP_IN)
    log.info("rewrite: %d tensors swapped, %d swap-outs, %d swap-ins, %d control edges",
             report.tensors_swapped, report.swap_outs_added, report.swap_ins_added,
             report.control_edges_added)
    return cur, report
