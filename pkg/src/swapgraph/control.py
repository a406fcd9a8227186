"""Selection of control operations that delay swap-in execution.

A swap-in placed right after its swap-out would pull the tensor back long
before the consumer runs, wasting device memory; with no trigger at all it
cannot be scheduled sensibly.  Both strategies search the window between the
swap-out's order and the consumer's order for an operation the consumer is
reachable from, then a control edge from that operation to the swap-in delays
the transfer until roughly ``lb`` steps before the consumer.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import (
    CompGraph,
    EdgeAction,
    EdgeRec,
    Phase,
    SWAP_KINDS,
    ancestors,
    reachable,
)


@dataclass(frozen=True)
class CtrlQuery:
    """Search window for one swap-in.

    ``source`` anchors the lower end of the order window (the swap-out, or
    the producer when querying an unrewritten graph); ``target`` is the
    consumer the swap-in feeds.  ``lb``/``ub`` bound the distance, in order
    steps, between the chosen operation and the target.
    """

    source: int
    target: int
    lb: int = 1
    ub: int = 10000


def _logical_successors(g: CompGraph, node_id: int) -> list[int]:
    """Non-update successors, looking through swap chains.

    Swap nodes forward a value unchanged, so for the purpose of walking the
    underlying computation they behave like wires: a successor that is a swap
    node is replaced by its own successors, transitively.
    """
    seen = {node_id}
    out = []
    stack = [node_id]
    while stack:
        cur = stack.pop()
        for e in g.out_edges(cur):
            if e.action is EdgeAction.UPDATE or e.dst in seen:
                continue
            seen.add(e.dst)
            if g.node_by_id[e.dst].kind in SWAP_KINDS:
                stack.append(e.dst)
            else:
                out.append(e.dst)
    return sorted(out)


def _eligible(g: CompGraph, nid: int) -> bool:
    # control ops come from the underlying computation: swap instrumentation
    # and parameterized nodes never gate a swap-in
    n = g.node_by_id[nid]
    return not n.parameterized and n.kind not in SWAP_KINDS


def direct_order(g: CompGraph, order: dict[int, int], q: CtrlQuery) -> int | None:
    """Pick the control operation by order distance alone.

    Scans distances ``lb..ub`` below the target's order, nearest-to-target
    last, and returns the lowest-id operation at the first populated level
    from which the target is reachable.  Returns None when the whole window
    is out of range or empty.
    """
    lower = max(order[q.target] - q.ub + 1, order[q.source])
    target_ancestors = ancestors(g, q.target)
    by_order: dict[int, list[int]] = {}
    for n in g.nodes:
        by_order.setdefault(order[n.id], []).append(n.id)
    for dist in range(q.lb, q.ub + 1):
        level = order[q.target] - dist
        if level <= lower:
            return None
        found = [nid for nid in by_order.get(level, ())
                 if nid in target_ancestors and _eligible(g, nid)]
        if found:
            return min(found)
    return None


def _bfs_seed(g: CompGraph, source: int) -> int:
    # swap nodes have no forward-phase successors, so walk back to the op
    # whose output they forward and start the traversal there
    cur = source
    for _ in range(len(g.nodes) + 1):
        node = g.node_by_id[cur]
        if node.kind not in SWAP_KINDS:
            return cur
        ins = [e for e in g.in_edges(cur) if e.action is EdgeAction.READ]
        if len(ins) != 1:
            return cur
        cur = ins[0].src
    return cur


def chain_rule(g: CompGraph, order: dict[int, int], q: CtrlQuery) -> int | None:
    """Pick the control operation by following the forward phase.

    Breadth-first from the source's producing op, expanding only through
    forward-phase successors.  The distance bounds count traversal levels:
    starting ``lb`` levels out and giving up after ``ub``, the lowest-id
    backward-phase successor of the current level that lies inside the order
    window and can still reach the target wins.
    """
    lo, hi = q.lb, q.ub
    target_ancestors = ancestors(g, q.target)
    level = [_bfs_seed(g, q.source)]
    visited = set(level)
    while level:
        if hi == 0 or lo > hi:
            return None
        if lo <= 0:
            candidates = [
                s
                for nid in level
                for s in _logical_successors(g, nid)
                if g.node_by_id[s].phase is Phase.BACKWARD
                and order[q.source] < order[s] < order[q.target]
                and s in target_ancestors
            ]
            if candidates:
                return min(candidates)
        nxt = []
        for nid in level:
            for s in _logical_successors(g, nid):
                if g.node_by_id[s].phase is Phase.FORWARD and s not in visited:
                    visited.add(s)
                    nxt.append(s)
        lo -= 1
        hi -= 1
        level = nxt
    return None


def fallback_control(g: CompGraph, order: dict[int, int], source: int, target: int) -> int | None:
    """Latest-order operation below the target from which it is reachable."""
    span = order[target] - order[source]
    if span <= 0:
        return None
    return direct_order(g, order, CtrlQuery(source=source, target=target, lb=1, ub=span))


def attach_control(g: CompGraph, ctrl: int, swap_in: int) -> CompGraph:
    """Add a control edge ``ctrl -> swap_in``; rejects edges that close a cycle."""
    if ctrl not in g.node_by_id or swap_in not in g.node_by_id:
        raise KeyError(f"unknown node in control edge {ctrl} -> {swap_in}")
    if g.node_by_id[swap_in].parameterized:
        raise ValueError(f"control edge into parameterized node {swap_in}")
    if ctrl in reachable(g, swap_in):
        raise ValueError(
            f"control edge {ctrl} -> {swap_in} would close a cycle "
            f"({ctrl} is reachable from {swap_in})")
    edge = EdgeRec(src=ctrl, dst=swap_in, action=EdgeAction.CONTROL)
    return CompGraph(g.nodes, g.edges + (edge,), g.tensors)
