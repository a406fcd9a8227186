"""Reference interpreter for a small numeric op vocabulary.

Exists to prove rewrites are semantics-preserving: swap nodes forward values
untouched, so interpreting a graph before and after rewriting must give
bitwise-identical variable states.  Values are float64 numpy arrays.

Supported compute ops (dispatched on the node name): ``add``, ``sub``,
``mul`` (elementwise), ``neg``, ``matmul``, ``identity``, ``assign_update``
(pass-through feeding an update edge).  Variables and constants are sources;
swap nodes behave as identities regardless of name.

Input convention: operands are ordered by ascending origin tensor id, where
the origin follows swap/identity chains back to the originally produced
tensor.  This keeps non-commutative ops stable under rewriting, which swaps
a consumer's input tensor for a fresh one with a higher id.
"""

from __future__ import annotations

import heapq

import numpy as np

from .graph import CompGraph, EdgeAction, NodeKind, SWAP_KINDS, topo_order

_IDENTITY_NAMES = {"identity", "assign_update"}


def _origin_tensor(g: CompGraph, tensor_id: int, cache: dict[int, int]) -> int:
    if tensor_id in cache:
        return cache[tensor_id]
    chain = []
    cur = tensor_id
    while cur not in cache:
        chain.append(cur)
        producer = g.node_by_id[g.tensor_by_id[cur].producer]
        forwards = producer.kind in SWAP_KINDS or (
            producer.kind is NodeKind.COMPUTE and producer.name in _IDENTITY_NAMES)
        if not forwards:
            break
        ins = [e for e in g.in_edges(producer.id) if e.action is EdgeAction.READ]
        if len(ins) != 1:
            break
        cur = ins[0].tensor
        if cur in chain:  # defensive; validated graphs cannot loop here
            break
    root = cache.get(cur, cur)
    for tid in chain:
        cache[tid] = root
    return root


def _as_value(raw) -> np.ndarray:
    arr = np.asarray(raw, dtype=np.float64)
    return arr


def interpret(g: CompGraph, inputs: dict[str, object]) -> dict[str, np.ndarray]:
    """Run the graph once and return the final state of every parameterized node.

    ``inputs`` binds parameterized nodes by name.  A constant left unbound
    evaluates to the float its name spells, if it spells one.  Ops execute
    serially in ascending (order, id); an update edge commits into its
    variable the moment the producer finishes, before anything else runs, so
    later readers of the variable observe the committed value.
    """
    order = topo_order(g)
    state: dict[int, np.ndarray] = {}
    for n in g.nodes:
        if not n.parameterized:
            continue
        if n.name in inputs:
            state[n.id] = _as_value(inputs[n.name])
        elif n.kind is NodeKind.CONSTANT:
            try:
                state[n.id] = _as_value(float(n.name))
            except ValueError:
                raise ValueError(f"constant {n.name!r} (node {n.id}) is unbound "
                                 f"and its name is not a number") from None
        else:
            raise ValueError(f"variable {n.name!r} (node {n.id}) is unbound")

    # reachability over read/control edges decides what runs
    runnable: set[int] = set()
    frontier = [n.id for n in g.nodes if n.parameterized]
    seen = set(frontier)
    while frontier:
        nid = frontier.pop()
        for e in g.out_edges(nid):
            if e.action is EdgeAction.UPDATE or e.dst in seen:
                continue
            seen.add(e.dst)
            frontier.append(e.dst)
            if not g.node_by_id[e.dst].parameterized:
                runnable.add(e.dst)

    values: dict[int, np.ndarray] = {}
    pending: dict[int, int] = {}
    for nid in runnable:
        count = 0
        for e in g.in_edges(nid):
            if e.action is EdgeAction.READ:
                if not g.node_by_id[g.tensor_by_id[e.tensor].producer].parameterized:
                    count += 1
            elif e.action is EdgeAction.CONTROL:
                if e.src in runnable:
                    count += 1
        pending[nid] = count

    origin_cache: dict[int, int] = {}
    ready = [(order[nid], nid) for nid in runnable if pending[nid] == 0]
    heapq.heapify(ready)
    done: set[int] = set()

    def release(nid: int):
        pending[nid] -= 1
        if pending[nid] == 0:
            heapq.heappush(ready, (order[nid], nid))

    while ready:
        _, nid = heapq.heappop(ready)
        node = g.node_by_id[nid]
        in_reads = [e for e in g.in_edges(nid) if e.action is EdgeAction.READ]
        in_reads.sort(key=lambda e: (_origin_tensor(g, e.tensor, origin_cache), e.tensor))
        args = []
        for e in in_reads:
            producer = g.tensor_by_id[e.tensor].producer
            if g.node_by_id[producer].parameterized:
                args.append(state[producer])  # live value at execution time
            else:
                args.append(values[e.tensor])
        result = _apply(node, args)
        outputs = g.produced_tensors(nid)
        if len(outputs) > 1:
            raise ValueError(f"op {node.name!r} (node {nid}) has multiple outputs; "
                             "the interpreter vocabulary is single-output")
        for t in outputs:
            values[t.id] = result
        done.add(nid)
        # updates commit before any dependent read can run
        for e in g.out_edges(nid):
            if e.action is EdgeAction.UPDATE:
                target = g.node_by_id[e.dst]
                if not target.parameterized:
                    raise ValueError(f"update edge into non-variable node {e.dst}")
                new = values[e.tensor]
                old = state[e.dst]
                if old.shape != new.shape:
                    raise ValueError(
                        f"update into {target.name!r}: shape {new.shape} != {old.shape}")
                state[e.dst] = new
        for e in g.out_edges(nid):
            if e.action is EdgeAction.CONTROL and e.dst in runnable:
                release(e.dst)
        for t in outputs:
            for e in g.consumer_edges(t.id):
                if e.action is EdgeAction.READ and e.dst in runnable:
                    release(e.dst)

    missing = runnable - done
    if missing:
        raise ValueError(f"ops never became ready (missing inputs?): {sorted(missing)}")
    return {g.node_by_id[nid].name: val for nid, val in state.items()}


def _apply(node, args: list[np.ndarray]) -> np.ndarray:
    kind = node.kind
    if kind in SWAP_KINDS:
        _arity(node, args, 1)
        return args[0]
    name = node.name
    if name in ("identity", "assign_update"):
        _arity(node, args, 1)
        return args[0]
    if name == "neg":
        _arity(node, args, 1)
        return -args[0]
    if name in ("add", "sub", "mul"):
        _arity(node, args, 2)
        a, b = args
        if a.shape != b.shape:
            raise ValueError(f"{name} (node {node.id}): shapes {a.shape} and {b.shape} differ")
        return {"add": a + b, "sub": a - b, "mul": a * b}[name]
    if name == "matmul":
        _arity(node, args, 2)
        a, b = args
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul (node {node.id}): shapes {a.shape} @ {b.shape} invalid")
        return a @ b
    raise ValueError(f"unsupported op {name!r} (node {node.id})")


def _arity(node, args, n):
    if len(args) != n:
        raise ValueError(f"{node.name!r} (node {node.id}) expects {n} input(s), got {len(args)}")
