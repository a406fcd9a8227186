"""Build a tiny expression graph by hand and run it through the interpreter.

The graph computes z = (x + y) * (x - 5) and writes the product back into the
variable z with an update edge. Walks through construction, validation,
scheduling, and evaluation.
"""

from swapgraph import (
    CompGraph,
    EdgeAction,
    EdgeRec,
    Phase,
    TensorSpec,
    compute_node,
    constant_node,
    interpret,
    lifetime,
    topo_order,
    validate,
    variable_node,
)


def build() -> CompGraph:
    nodes = [
        variable_node(0, "x"),
        variable_node(1, "y"),
        constant_node(2, "5"),
        compute_node(3, "add", phase=Phase.FORWARD),
        compute_node(4, "sub", phase=Phase.FORWARD),
        compute_node(5, "mul", phase=Phase.FORWARD),
        variable_node(6, "z"),
    ]
    tensors = [TensorSpec(i, i, size_bytes=8) for i in range(6)]
    edges = [
        EdgeRec(0, 3, EdgeAction.READ, 0),
        EdgeRec(1, 3, EdgeAction.READ, 1),
        EdgeRec(0, 4, EdgeAction.READ, 0),
        EdgeRec(2, 4, EdgeAction.READ, 2),
        EdgeRec(3, 5, EdgeAction.READ, 3),
        EdgeRec(4, 5, EdgeAction.READ, 4),
        EdgeRec(5, 6, EdgeAction.UPDATE, 5),
    ]
    return CompGraph(nodes, edges, tensors)


def main() -> None:
    g = build()

    problems = validate(g)
    print(f"validate() found {len(problems)} problem(s)")

    order = topo_order(g)
    print("schedule levels:")
    for node in g.nodes:
        print(f"  {node.name:>3} (id {node.id}) at level {order[node.id]}")

    # x feeds both add and sub, so its tensor stays live one level longer
    # than y's.
    print(f"lifetime of x's tensor: {lifetime(g, order, 0)}")
    print(f"lifetime of y's tensor: {lifetime(g, order, 1)}")

    # every variable needs an initial binding, including the one being updated
    out = interpret(g, {"x": 2.0, "y": 1.0, "z": 0.0})
    print(f"z = (2 + 1) * (2 - 5) = {out['z']}")


if __name__ == "__main__":
    main()
