"""Rewrite a generated training graph and inspect what changed.

Generates a six-layer chain, swaps every forward activation that survives
into the backward pass, and prints the rewrite report, the inserted nodes,
and a DOT rendering of the result.
"""

from swapgraph import (
    NodeKind,
    RewriteConfig,
    chain,
    rewrite,
    to_dot,
    topo_order,
    validate,
)


def main() -> None:
    g = chain(6, tensor_bytes=1 << 20)
    print(f"input: {len(g.nodes)} nodes, {len(g.edges)} edges")

    cfg = RewriteConfig(lb=1, ub=8, ctrld_strategy="chain_rule")
    out, report = rewrite(g, cfg)

    print("\nreport:")
    for key, value in report.to_dict().items():
        if key == "edges_rewritten":
            print(f"  {key}: {len(value)} edges")
        elif key == "skipped":
            print(f"  {key}: {len(value)} note(s)")
        else:
            print(f"  {key}: {value}")

    order = topo_order(out)
    print("\ninserted swap nodes:")
    for node in out.nodes:
        if node.kind in (NodeKind.SWAP_OUT, NodeKind.SWAP_IN):
            print(f"  {node.name:>14} on {node.device} at level {order[node.id]}")

    problems = validate(out)
    print(f"\nrewritten graph validates with {len(problems)} problem(s)")

    dot = to_dot(out, order)
    print(f"\nDOT output is {len(dot.splitlines())} lines; first six:")
    for line in dot.splitlines()[:6]:
        print(f"  {line}")


if __name__ == "__main__":
    main()
