"""Hand-built graphs with known orders, lifetimes and interpreter results.

Everything here is constructed node by node so tests can assert exact ids
and orders.  Builders return plain CompGraph values; tests that need the
same graph twice just call the builder again (construction is cheap and
deterministic).
"""

from __future__ import annotations

from swapgraph.graph import (
    CompGraph,
    EdgeAction,
    EdgeRec,
    OpNode,
    Phase,
    TensorSpec,
    compute_node,
    constant_node,
    variable_node,
)


class GraphSketch:
    """Tiny builder: nodes, one output tensor per op, explicit edges."""

    def __init__(self):
        self.nodes: list[OpNode] = []
        self.edges: list[EdgeRec] = []
        self.tensors: list[TensorSpec] = []

    def add(self, node: OpNode, size_bytes: int = 8) -> int:
        """Append a node plus its output tensor; returns the tensor id."""
        self.nodes.append(node)
        tid = len(self.tensors)
        self.tensors.append(TensorSpec(tid, node.id, size_bytes=size_bytes))
        return tid

    def read(self, tensor_id: int, dst: int) -> None:
        src = self.tensors[tensor_id].producer
        self.edges.append(EdgeRec(src, dst, EdgeAction.READ, tensor_id))

    def update(self, tensor_id: int, var_node: int) -> None:
        src = self.tensors[tensor_id].producer
        self.edges.append(EdgeRec(src, var_node, EdgeAction.UPDATE, tensor_id))

    def control(self, src: int, dst: int) -> None:
        self.edges.append(EdgeRec(src, dst, EdgeAction.CONTROL))

    def graph(self) -> CompGraph:
        return CompGraph(self.nodes, self.edges, self.tensors)


def expression_graph() -> CompGraph:
    """z = (x + y) * (x - 5), with the product committed into variable z."""
    s = GraphSketch()
    t_x = s.add(variable_node(0, "x"))
    t_y = s.add(variable_node(1, "y"))
    t_five = s.add(constant_node(2, "5"))
    t_add = s.add(compute_node(3, "add"))
    s.read(t_x, 3)
    s.read(t_y, 3)
    t_sub = s.add(compute_node(4, "sub"))
    s.read(t_x, 4)
    s.read(t_five, 4)
    t_mul = s.add(compute_node(5, "mul"))
    s.read(t_add, 5)
    s.read(t_sub, 5)
    s.add(variable_node(6, "z"))
    s.update(t_mul, 6)
    return s.graph()


def variable_refresh_graph() -> CompGraph:
    """x -> h -> f -> f2, f updates x, control f2 -> f1.

    Orders come out x:0, h:1, f:2, f2:3, f1:4: the control edge pushes f1
    past f2 even though f1's only data input is h.
    """
    s = GraphSketch()
    t_x = s.add(variable_node(0, "x"))
    t_h = s.add(compute_node(1, "h"))
    s.read(t_x, 1)
    t_f = s.add(compute_node(2, "f"))
    s.read(t_h, 2)
    s.update(t_f, 0)
    t_f2 = s.add(compute_node(3, "f2"))
    s.read(t_f, 3)
    s.add(compute_node(4, "f1"))
    s.read(t_h, 4)
    s.control(3, 4)
    del t_f2
    return s.graph()


def hot_fanout_graph() -> CompGraph:
    """One producer (f1, order 10) fanning out to consumers at orders 11, 18, 25.

    Layout (all forward phase, one accelerator, cost 1):

        x -> pre_1..pre_9 -> f1            f1 at order 10, output t1
        f1 -> q_1..q_14 -> f2              f2 at order 25, also reads t1
        f1 -> r_1..r_7  -> f3              f3 at order 18, also reads t1
        f1 -> f4                           f4 at order 11, reads t1 only

    The order gaps on f1's direct edges are 15 (f2), 8 (f3) and 1 (f4), so
    a branch threshold of 5 selects exactly the f2 and f3 edges.  Node ids:
    pre_i = i, f1 = 10, q_i = 10 + i, f2 = 25, r_i = 25 + i, f3 = 33,
    f4 = 34.
    """
    s = GraphSketch()
    prev = s.add(variable_node(0, "x"))
    for i in range(1, 10):
        cur = s.add(compute_node(i, f"pre_{i}", phase=Phase.FORWARD))
        s.read(prev, i)
        prev = cur
    t1 = s.add(compute_node(10, "f1", phase=Phase.FORWARD))
    s.read(prev, 10)

    prev = t1
    for i in range(1, 15):
        cur = s.add(compute_node(10 + i, f"q_{i}", phase=Phase.FORWARD))
        s.read(prev, 10 + i)
        prev = cur
    s.add(compute_node(25, "f2", phase=Phase.FORWARD))
    s.read(prev, 25)
    s.read(t1, 25)

    prev = t1
    for i in range(1, 8):
        cur = s.add(compute_node(25 + i, f"r_{i}", phase=Phase.FORWARD))
        s.read(prev, 25 + i)
        prev = cur
    s.add(compute_node(33, "f3", phase=Phase.FORWARD))
    s.read(prev, 33)
    s.read(t1, 33)

    s.add(compute_node(34, "f4", phase=Phase.FORWARD))
    s.read(t1, 34)
    return s.graph()


HOT_TENSOR = 10  # f1's output in hot_fanout_graph
F1, F2, F3, F4 = 10, 25, 33, 34


def order_chain_graph() -> CompGraph:
    """x -> a -> b -> c -> d, orders 1..4; the smallest window fixture."""
    s = GraphSketch()
    prev = s.add(variable_node(0, "x"))
    for nid, name in ((1, "a"), (2, "b"), (3, "c"), (4, "d")):
        cur = s.add(compute_node(nid, name, phase=Phase.FORWARD))
        s.read(prev, nid)
        prev = cur
    return s.graph()


def two_layer_training_graph() -> CompGraph:
    """x -> A -> B forward, then gB -> gA -> loss_in backward.

    gB reads B's output, gA reads gB's output plus A's output, loss_in
    consumes gA.  Orders: A:1, B:2, gB:3, gA:4, loss_in:5.
    """
    s = GraphSketch()
    t_x = s.add(variable_node(0, "x"))
    t_a = s.add(compute_node(1, "A", phase=Phase.FORWARD))
    s.read(t_x, 1)
    t_b = s.add(compute_node(2, "B", phase=Phase.FORWARD))
    s.read(t_a, 2)
    t_gb = s.add(compute_node(3, "gB", phase=Phase.BACKWARD))
    s.read(t_b, 3)
    t_ga = s.add(compute_node(4, "gA", phase=Phase.BACKWARD))
    s.read(t_gb, 4)
    s.read(t_a, 4)
    s.add(compute_node(5, "loss_in", phase=Phase.BACKWARD))
    s.read(t_ga, 5)
    return s.graph()


def three_op_chain(size_bytes: int = 10) -> CompGraph:
    """x -> op1 -> op2 -> op3, every output ``size_bytes``; memory golden."""
    s = GraphSketch()
    prev = s.add(variable_node(0, "x"), size_bytes)
    for nid, name in ((1, "op1"), (2, "op2"), (3, "op3")):
        cur = s.add(compute_node(nid, name, phase=Phase.FORWARD), size_bytes)
        s.read(prev, nid)
        prev = cur
    return s.graph()


def clustered_consumers_graph() -> CompGraph:
    """One hot tensor read by backward ops at orders 18, 19, 25 and 26.

    Forward padding chains space the consumers out; with a swap-in fuse
    distance of 1 they cluster as {18, 19} and {25, 26}.
    """
    s = GraphSketch()
    prev = s.add(variable_node(0, "x"))
    t_p = s.add(compute_node(1, "p", phase=Phase.FORWARD))
    s.read(prev, 1)
    pad = t_p
    nid = 2
    for _ in range(16):  # pad orders 2..17
        cur = s.add(compute_node(nid, f"pad_{nid}", scope="padding",
                                 phase=Phase.FORWARD))
        s.read(pad, nid)
        pad = cur
        nid += 1
    c18 = s.add(compute_node(nid, "c18", phase=Phase.BACKWARD))
    s.read(pad, nid)
    s.read(t_p, nid)
    nid += 1
    c19 = s.add(compute_node(nid, "c19", phase=Phase.BACKWARD))
    s.read(c18, nid)
    s.read(t_p, nid)
    nid += 1
    pad = c19
    for _ in range(5):  # pad orders 20..24
        cur = s.add(compute_node(nid, f"pad_{nid}", scope="padding",
                                 phase=Phase.FORWARD))
        s.read(pad, nid)
        pad = cur
        nid += 1
    c25 = s.add(compute_node(nid, "c25", phase=Phase.BACKWARD))
    s.read(pad, nid)
    s.read(t_p, nid)
    nid += 1
    s.add(compute_node(nid, "c26", phase=Phase.BACKWARD))
    s.read(c25, nid)
    s.read(t_p, nid)
    return s.graph()


def training_expression_graph() -> CompGraph:
    """Small interpreter-vocabulary training step: 3 forward, 2 backward, 2 updates.

    Every forward output feeds the gradient accumulation, so both updates
    depend on every reader of the variables they overwrite; rewriting can
    delay backward ops freely without changing what anyone observes.
    """
    s = GraphSketch()
    t_x = s.add(variable_node(0, "x"), 32)
    t_y = s.add(variable_node(1, "y"), 32)
    t_a = s.add(compute_node(2, "add", scope="model/l0", phase=Phase.FORWARD), 32)
    s.read(t_x, 2)
    s.read(t_y, 2)
    t_b = s.add(compute_node(3, "mul", scope="model/l1", phase=Phase.FORWARD), 32)
    s.read(t_a, 3)
    s.read(t_x, 3)
    t_c = s.add(compute_node(4, "neg", scope="model/l2", phase=Phase.FORWARD), 32)
    s.read(t_b, 4)
    t_g1 = s.add(compute_node(5, "mul", scope="grads/l2", phase=Phase.BACKWARD), 32)
    s.read(t_a, 5)
    s.read(t_c, 5)
    t_g2 = s.add(compute_node(6, "sub", scope="grads/l1", phase=Phase.BACKWARD), 32)
    s.read(t_b, 6)
    s.read(t_g1, 6)
    t_ux = s.add(compute_node(7, "sub", scope="optimizer/x", phase=Phase.UPDATE), 32)
    s.read(t_x, 7)
    s.read(t_g2, 7)
    s.update(t_ux, 0)
    t_uy = s.add(compute_node(8, "add", scope="optimizer/y", phase=Phase.UPDATE), 32)
    s.read(t_y, 8)
    s.read(t_g2, 8)
    s.update(t_uy, 1)
    return s.graph()


def replay_chain(n: int, tensor_bytes: int = 1 << 20) -> CompGraph:
    """Forward chain whose activations are all re-read late, in forward order.

    The backward section walks activations 0..n-1 while carrying a running
    state, so the order gap between fwd_i and its re-reader stays near n for
    every i.  That keeps every control-op search window deep, which makes
    the lb sweep behave cleanly (no boundary consumers with shallow windows).
    """
    s = GraphSketch()
    prev = s.add(variable_node(0, "x_in"), tensor_bytes)
    acts = []
    for i in range(n):
        nid = 1 + i
        t = s.add(compute_node(nid, f"fwd_{i}", scope="fwd", phase=Phase.FORWARD),
                  tensor_bytes)
        s.read(prev, nid)
        acts.append(t)
        prev = t
    rp = prev
    for i in range(n):
        nid = 1 + n + i
        t = s.add(compute_node(nid, f"replay_{i}", scope="replay",
                               phase=Phase.BACKWARD), tensor_bytes)
        s.read(acts[i], nid)
        if rp != acts[i]:
            s.read(rp, nid)
        rp = t
    return s.graph()
