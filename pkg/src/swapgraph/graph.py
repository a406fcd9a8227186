"""Core data model for computational graphs with labeled edges.

A graph is a set of operation nodes, a set of tensors, and a list of edges.
Data edges (``read``/``update``) carry a tensor id; ``control`` edges carry
none and only constrain execution order.  Parameterized nodes (variables and
constants) hold state and sit at order 0; everything else executes when its
inputs are available.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

log = logging.getLogger("swapgraph")

HOST = "host"


def accelerator(index: int = 0) -> str:
    return f"acc:{index}"


def is_accelerator(device: str) -> bool:
    return device.startswith("acc:")


def is_valid_device(device: str) -> bool:
    if device == HOST:
        return True
    if device.startswith("acc:"):
        suffix = device[4:]
        return suffix.isdigit()
    return False


class NodeKind(str, Enum):
    COMPUTE = "compute"
    VARIABLE = "variable"
    CONSTANT = "constant"
    SWAP_OUT = "swap_out"
    SWAP_IN = "swap_in"


class Phase(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    UPDATE = "update"
    UNKNOWN = "unknown"


class EdgeAction(str, Enum):
    READ = "read"
    UPDATE = "update"
    CONTROL = "control"


PARAM_KINDS = frozenset({NodeKind.VARIABLE, NodeKind.CONSTANT})
SWAP_KINDS = frozenset({NodeKind.SWAP_OUT, NodeKind.SWAP_IN})


@dataclass(frozen=True)
class OpNode:
    """One operation. ``parameterized`` must agree with the kind."""

    id: int
    name: str
    scope: str = ""
    kind: NodeKind = NodeKind.COMPUTE
    parameterized: bool = False
    phase: Phase = Phase.UNKNOWN
    device: str = "acc:0"
    cost_hint: float = 1.0


@dataclass(frozen=True)
class TensorSpec:
    id: int
    producer: int
    size_bytes: int = 0
    dtype: str = "f32"


@dataclass(frozen=True)
class EdgeRec:
    """Labeled edge. ``tensor`` is set exactly when action is read/update."""

    src: int
    dst: int
    action: EdgeAction = EdgeAction.READ
    tensor: int | None = None


def edge_sort_key(e: EdgeRec) -> tuple:
    return (e.src, e.dst, e.action.value, -1 if e.tensor is None else e.tensor)


class CompGraph:
    """Immutable graph value: construct once, never mutate.

    Rewriting operations take a graph and return a new one; node, edge and
    tensor collections are normalized (sorted) at construction so two graphs
    with the same content compare equal regardless of build order.
    """

    __slots__ = (
        "nodes",
        "edges",
        "tensors",
        "node_by_id",
        "tensor_by_id",
        "_out",
        "_in",
        "_produced",
        "_consumers",
    )

    def __init__(self, nodes, edges, tensors):
        self.nodes: tuple[OpNode, ...] = tuple(sorted(nodes, key=lambda n: n.id))
        self.edges: tuple[EdgeRec, ...] = tuple(sorted(edges, key=edge_sort_key))
        self.tensors: tuple[TensorSpec, ...] = tuple(sorted(tensors, key=lambda t: t.id))
        self.node_by_id = {n.id: n for n in self.nodes}
        self.tensor_by_id = {t.id: t for t in self.tensors}
        out: dict[int, list[EdgeRec]] = {n.id: [] for n in self.nodes}
        inc: dict[int, list[EdgeRec]] = {n.id: [] for n in self.nodes}
        produced: dict[int, list[TensorSpec]] = {n.id: [] for n in self.nodes}
        consumers: dict[int, list[EdgeRec]] = {t.id: [] for t in self.tensors}
        for e in self.edges:
            # tolerate dangling endpoints here; validate() reports them
            out.setdefault(e.src, []).append(e)
            inc.setdefault(e.dst, []).append(e)
            if e.tensor is not None:
                consumers.setdefault(e.tensor, []).append(e)
        for t in self.tensors:
            produced.setdefault(t.producer, []).append(t)
        self._out = out
        self._in = inc
        self._produced = produced
        self._consumers = consumers

    def node(self, node_id: int) -> OpNode:
        return self.node_by_id[node_id]

    def tensor(self, tensor_id: int) -> TensorSpec:
        return self.tensor_by_id[tensor_id]

    def out_edges(self, node_id: int) -> list[EdgeRec]:
        return self._out.get(node_id, [])

    def in_edges(self, node_id: int) -> list[EdgeRec]:
        return self._in.get(node_id, [])

    def produced_tensors(self, node_id: int) -> list[TensorSpec]:
        return self._produced.get(node_id, [])

    def consumer_edges(self, tensor_id: int) -> list[EdgeRec]:
        """Read/update edges that carry the given tensor."""
        return self._consumers.get(tensor_id, [])

    def is_parameterized(self, node_id: int) -> bool:
        return self.node_by_id[node_id].parameterized

    def max_node_id(self) -> int:
        return max((n.id for n in self.nodes), default=-1)

    def max_tensor_id(self) -> int:
        return max((t.id for t in self.tensors), default=-1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CompGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.tensors == other.tensors
        )

    def __hash__(self):
        return hash((self.nodes, self.edges, self.tensors))

    def __repr__(self) -> str:
        return (
            f"CompGraph(nodes={len(self.nodes)}, edges={len(self.edges)}, "
            f"tensors={len(self.tensors)})"
        )


# Convenience constructors used by generators, tests and demos.

def variable_node(node_id: int, name: str, *, scope: str = "", device: str = "acc:0") -> OpNode:
    return OpNode(node_id, name, scope=scope, kind=NodeKind.VARIABLE,
                  parameterized=True, device=device, cost_hint=0.0)


def constant_node(node_id: int, name: str, *, scope: str = "", device: str = "acc:0") -> OpNode:
    return OpNode(node_id, name, scope=scope, kind=NodeKind.CONSTANT,
                  parameterized=True, device=device, cost_hint=0.0)


def compute_node(node_id: int, name: str, *, scope: str = "", phase: Phase = Phase.UNKNOWN,
                 device: str = "acc:0", cost_hint: float = 1.0) -> OpNode:
    return OpNode(node_id, name, scope=scope, kind=NodeKind.COMPUTE,
                  parameterized=False, phase=phase, device=device, cost_hint=cost_hint)


class CycleError(ValueError):
    """Raised when an ordering is requested for a cyclic execution subgraph."""

    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        super().__init__("execution subgraph contains a cycle: " + " -> ".join(map(str, cycle)))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    node: int | None = None
    edge: EdgeRec | None = None
    tensor: int | None = None


def _execution_edges(g: CompGraph):
    """Edges of the execution subgraph: update edges into variables excluded."""
    for e in g.edges:
        dst = g.node_by_id.get(e.dst)
        if e.action is EdgeAction.UPDATE and dst is not None and dst.parameterized:
            continue
        yield e


def _forwards_value(node: OpNode) -> bool:
    # nodes that pass a tensor through unchanged, for producer-chain checks
    return node.kind in SWAP_KINDS or (node.kind is NodeKind.COMPUTE and node.name == "identity")


def _chain_reaches_producer(g: CompGraph, src: int, producer: int) -> bool:
    """True if ``src`` forwards the producer's value through swap/identity nodes."""
    cur = src
    for _ in range(len(g.nodes) + 1):
        if cur == producer:
            return True
        node = g.node_by_id.get(cur)
        if node is None or not _forwards_value(node):
            return False
        ins = [e for e in g.in_edges(cur) if e.action is EdgeAction.READ]
        if len(ins) != 1:
            return False
        cur = ins[0].src
    return False


def validate(g: CompGraph) -> list[Violation]:
    """Check every structural invariant; an empty list means the graph is valid."""
    out: list[Violation] = []
    seen_nodes: set[int] = set()
    for n in g.nodes:
        if n.id in seen_nodes:
            out.append(Violation("dup-node-id", f"node id {n.id} appears more than once", node=n.id))
        seen_nodes.add(n.id)
        if not is_valid_device(n.device):
            out.append(Violation("bad-device", f"node {n.id} has malformed device {n.device!r}", node=n.id))
        if n.kind in SWAP_KINDS and n.device != HOST:
            out.append(Violation("swap-off-host", f"swap node {n.id} must be placed on host", node=n.id))
        if (n.kind in PARAM_KINDS) != n.parameterized:
            out.append(Violation(
                "param-kind-mismatch",
                f"node {n.id} kind {n.kind.value} disagrees with parameterized={n.parameterized}",
                node=n.id))
        if n.cost_hint < 0:
            out.append(Violation("bad-cost", f"node {n.id} has negative cost_hint", node=n.id))

    seen_tensors: set[int] = set()
    for t in g.tensors:
        if t.id in seen_tensors:
            out.append(Violation("dup-tensor-id", f"tensor id {t.id} appears more than once", tensor=t.id))
        seen_tensors.add(t.id)
        if t.producer not in g.node_by_id:
            out.append(Violation("no-producer", f"tensor {t.id} names unknown producer {t.producer}", tensor=t.id))
        if t.size_bytes < 0:
            out.append(Violation("bad-size", f"tensor {t.id} has negative size_bytes", tensor=t.id))

    for e in g.edges:
        if e.src not in g.node_by_id or e.dst not in g.node_by_id:
            out.append(Violation("dangling-edge", f"edge {e} references an unknown node", edge=e))
            continue
        if e.src == e.dst:
            out.append(Violation("self-loop", f"node {e.src} has a self-loop", edge=e))
        dst = g.node_by_id[e.dst]
        if e.action is EdgeAction.CONTROL:
            if e.tensor is not None:
                out.append(Violation("control-with-tensor", f"control edge {e} must not carry a tensor", edge=e))
            if dst.parameterized:
                out.append(Violation("control-to-variable", f"control edge into parameterized node {dst.id}", edge=e))
            continue
        if e.tensor is None:
            out.append(Violation("data-without-tensor", f"{e.action.value} edge {e} carries no tensor", edge=e))
            continue
        if e.tensor not in g.tensor_by_id:
            out.append(Violation("unknown-tensor", f"edge {e} references unknown tensor {e.tensor}", edge=e))
            continue
        t = g.tensor_by_id[e.tensor]
        if t.producer in g.node_by_id and not _chain_reaches_producer(g, e.src, t.producer):
            out.append(Violation(
                "wrong-source",
                f"edge {e} carries tensor {t.id} but src {e.src} is not its producer "
                f"or a swap/identity chain from it", edge=e))
        if e.action is EdgeAction.UPDATE and dst.kind is not NodeKind.VARIABLE:
            out.append(Violation("update-to-nonvariable", f"update edge {e} into non-variable node {dst.id}", edge=e))

    # acyclicity of the execution subgraph
    try:
        topo_order(g)
    except CycleError as exc:
        out.append(Violation("cycle", str(exc)))

    # every non-parameterized node reachable from a parameterized one must
    # have a data input, otherwise it can never be triggered
    starts = [n.id for n in g.nodes if n.parameterized]
    seen = set(starts)
    frontier = list(starts)
    while frontier:
        nid = frontier.pop()
        for e in g.out_edges(nid):
            if e.action is EdgeAction.UPDATE:
                continue
            if e.dst in g.node_by_id and e.dst not in seen:
                seen.add(e.dst)
                frontier.append(e.dst)
    for nid in sorted(seen):
        n = g.node_by_id[nid]
        if n.parameterized:
            continue
        if not any(e.action is EdgeAction.READ for e in g.in_edges(nid)):
            out.append(Violation("no-data-input", f"reachable node {nid} has no incoming read edge", node=nid))

    return out


def topo_order(g: CompGraph) -> dict[int, int]:
    """As-soon-as-possible layering of the execution subgraph.

    Parameterized nodes sit at order 0; every other node is one past the
    latest of its read/control predecessors.  Nodes that share an order could
    run in parallel.  Raises :class:`CycleError` when no ordering exists.
    """
    order: dict[int, int] = {}
    preds: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    succs: dict[int, list[int]] = {n.id: [] for n in g.nodes}
    indeg: dict[int, int] = {n.id: 0 for n in g.nodes}
    for e in _execution_edges(g):
        if e.src not in preds or e.dst not in preds:
            continue
        if g.node_by_id[e.dst].parameterized:
            # incoming edges never move a parameterized node off order 0
            continue
        preds[e.dst].append(e.src)
        succs[e.src].append(e.dst)
        indeg[e.dst] += 1

    ready = [n.id for n in g.nodes if indeg[n.id] == 0]
    while ready:
        nid = ready.pop()
        node = g.node_by_id[nid]
        if node.parameterized:
            order[nid] = 0
        else:
            order[nid] = 1 + max((order[p] for p in preds[nid]), default=0)
        for s in succs[nid]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)

    if len(order) != len(indeg):
        remaining = {nid for nid in indeg if nid not in order}
        raise CycleError(_find_cycle(succs, remaining))
    return order


def _find_cycle(succs: dict[int, list[int]], remaining: set[int]) -> list[int]:
    start = min(remaining)
    path: list[int] = []
    index: dict[int, int] = {}
    cur = start
    while cur not in index:
        index[cur] = len(path)
        path.append(cur)
        cur = next(s for s in sorted(succs[cur]) if s in remaining)
    return path[index[cur]:] + [cur]


def reachable(g: CompGraph, src: int) -> set[int]:
    """Transitive closure over read and control edges, including ``src``."""
    if src not in g.node_by_id:
        raise KeyError(f"unknown node id {src}")
    seen = {src}
    frontier = [src]
    while frontier:
        nid = frontier.pop()
        for e in g.out_edges(nid):
            if e.action is EdgeAction.UPDATE:
                continue
            if e.dst in g.node_by_id and e.dst not in seen:
                seen.add(e.dst)
                frontier.append(e.dst)
    return seen


def ancestors(g: CompGraph, dst: int) -> set[int]:
    """Nodes from which ``dst`` is reachable over read/control edges (incl. itself)."""
    if dst not in g.node_by_id:
        raise KeyError(f"unknown node id {dst}")
    seen = {dst}
    frontier = [dst]
    while frontier:
        nid = frontier.pop()
        for e in g.in_edges(nid):
            if e.action is EdgeAction.UPDATE:
                continue
            if e.src in g.node_by_id and e.src not in seen:
                seen.add(e.src)
                frontier.append(e.src)
    return seen


def lifetime(g: CompGraph, order: dict[int, int], tensor_id: int) -> int:
    """Number of order steps the tensor stays live past its producer.

    Read consumers hold the tensor until their own order step; an update edge
    commits into its variable the moment the producer runs, so it contributes
    at the producer's step.  A tensor nobody consumes gets lifetime 0.
    """
    t = g.tensor_by_id[tensor_id]
    consumers = g.consumer_edges(tensor_id)
    if not consumers:
        log.warning("tensor %d has no consumers; lifetime defaults to 0", tensor_id)
        return 0
    birth = order[t.producer]
    last = birth
    for e in consumers:
        if e.action is EdgeAction.READ:
            last = max(last, order[e.dst])
        else:  # update commits as soon as the producing op finishes
            last = max(last, birth)
    return last - birth
