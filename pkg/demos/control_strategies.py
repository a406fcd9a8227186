"""Compare the two control-dependency strategies on the same graph.

Both strategies answer the same question: which op should release a swap-in
so the tensor is back on the accelerator just before its consumer runs?
direct_order walks the schedule levels; chain_rule walks the graph structure.
This script rewrites a branchy network with each strategy and then sweeps
the lower bound on one swap pair to show how the trigger moves.
"""

from swapgraph import (
    CtrlQuery,
    EdgeAction,
    NodeKind,
    RewriteConfig,
    branchy,
    chain_rule,
    direct_order,
    rewrite,
    topo_order,
)


def control_picks(g):
    """Map each swap-in to the node whose completion releases it."""
    kind = {n.id: n.kind for n in g.nodes}
    return {e.dst: e.src for e in g.edges
            if e.action is EdgeAction.CONTROL and kind[e.dst] is NodeKind.SWAP_IN}


def main() -> None:
    g = branchy(6)

    for strategy in ("direct_order", "chain_rule"):
        out, report = rewrite(g, RewriteConfig(lb=2, ub=6, ctrld_strategy=strategy))
        order = topo_order(out)
        label = {n.id: n.name for n in out.nodes}
        print(f"{strategy} triggers {report.control_edges_added} swap-in(s):")
        for si, trigger in sorted(control_picks(out).items()):
            print(f"  {label[trigger]:>14} (level {order[trigger]:2d})"
                  f" releases {label[si]} (level {order[si]})")
        print()

    # sweep the lower bound on one pair: a larger lb demands more slack
    # between trigger and consumer, so the pick slides earlier
    out, _ = rewrite(g, RewriteConfig(lb=2, ub=6, ctrld_strategy="direct_order"))
    order = topo_order(out)
    label = {n.id: n.name for n in out.nodes}
    si = min(n.id for n in out.nodes if n.kind is NodeKind.SWAP_IN)
    so = next(e.src for e in out.edges
              if e.dst == si and e.action is EdgeAction.READ)
    consumer = next(e.dst for e in out.edges
                    if e.src == si and e.action is EdgeAction.READ)
    print(f"sweeping lb for {label[si]} feeding {label[consumer]}"
          f" (level {order[consumer]}):")
    for lb in range(1, 7):
        q = CtrlQuery(so, consumer, lb=lb, ub=10)
        d = direct_order(out, order, q)
        c = chain_rule(out, order, q)
        fmt = lambda pick: "none" if pick is None else (
            f"{label[pick]} (level {order[pick]})")
        print(f"  lb={lb}: direct_order -> {fmt(d)}; chain_rule -> {fmt(c)}")


if __name__ == "__main__":
    main()
