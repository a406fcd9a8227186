"""Graph wire formats: canonical JSON, Graphviz DOT, event-trace CSV.

The JSON layout is fixed: ``nodes`` / ``edges`` / ``tensors`` arrays with the
exact field names below.  Writing is canonical (sorted keys, arrays sorted by
id) so equal graphs serialize to identical bytes.
"""

from __future__ import annotations

import csv
import json
from typing import Any

from .graph import (
    CompGraph,
    EdgeAction,
    EdgeRec,
    NodeKind,
    OpNode,
    Phase,
    TensorSpec,
    edge_sort_key,
)


def graph_to_dict(g: CompGraph) -> dict[str, Any]:
    return {
        "nodes": [
            {
                "id": n.id,
                "name": n.name,
                "scope": n.scope,
                "kind": n.kind.value,
                "parameterized": n.parameterized,
                "phase": n.phase.value,
                "device": n.device,
                "cost_hint": n.cost_hint,
            }
            for n in sorted(g.nodes, key=lambda n: n.id)
        ],
        "edges": [
            {
                "src": e.src,
                "dst": e.dst,
                "action": e.action.value,
                "tensor": e.tensor,
            }
            for e in sorted(g.edges, key=edge_sort_key)
        ],
        "tensors": [
            {
                "id": t.id,
                "producer": t.producer,
                "size_bytes": t.size_bytes,
                "dtype": t.dtype,
            }
            for t in sorted(g.tensors, key=lambda t: t.id)
        ],
    }


class GraphFormatError(ValueError):
    """Malformed graph document; the message carries field context."""


def _need(obj: dict, field: str, where: str):
    if field not in obj:
        raise GraphFormatError(f"{where}: missing field {field!r}")
    return obj[field]


def _enum(cls, raw, where: str):
    try:
        return cls(raw)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise GraphFormatError(f"{where}: {raw!r} is not one of {allowed}") from None


def graph_from_dict(doc: dict[str, Any]) -> CompGraph:
    if not isinstance(doc, dict):
        raise GraphFormatError("top level: expected an object")
    nodes = []
    for i, raw in enumerate(_need(doc, "nodes", "top level")):
        where = f"nodes[{i}]"
        nodes.append(OpNode(
            id=int(_need(raw, "id", where)),
            name=str(_need(raw, "name", where)),
            scope=str(raw.get("scope", "")),
            kind=_enum(NodeKind, _need(raw, "kind", where), where),
            parameterized=bool(_need(raw, "parameterized", where)),
            phase=_enum(Phase, raw.get("phase", "unknown"), where),
            device=str(_need(raw, "device", where)),
            cost_hint=float(raw.get("cost_hint", 1.0)),
        ))
    edges = []
    for i, raw in enumerate(_need(doc, "edges", "top level")):
        where = f"edges[{i}]"
        tensor = _need(raw, "tensor", where)
        edges.append(EdgeRec(
            src=int(_need(raw, "src", where)),
            dst=int(_need(raw, "dst", where)),
            action=_enum(EdgeAction, _need(raw, "action", where), where),
            tensor=None if tensor is None else int(tensor),
        ))
    tensors = []
    for i, raw in enumerate(_need(doc, "tensors", "top level")):
        where = f"tensors[{i}]"
        tensors.append(TensorSpec(
            id=int(_need(raw, "id", where)),
            producer=int(_need(raw, "producer", where)),
            size_bytes=int(_need(raw, "size_bytes", where)),
            dtype=str(raw.get("dtype", "f32")),
        ))
    return CompGraph(nodes, edges, tensors)


def dumps(g: CompGraph) -> str:
    return json.dumps(graph_to_dict(g), sort_keys=True, indent=2) + "\n"


def loads(text: str) -> CompGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return graph_from_dict(doc)


def save_graph(g: CompGraph, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(g))


def load_graph(path: str) -> CompGraph:
    with open(path) as fh:
        text = fh.read()
    try:
        return loads(text)
    except GraphFormatError as exc:
        raise GraphFormatError(f"{path}: {exc}") from None


_EDGE_STYLE = {
    EdgeAction.READ: "solid",
    EdgeAction.UPDATE: "dotted",
    EdgeAction.CONTROL: "dashed",
}


def to_dot(g: CompGraph, order: dict[int, int] | None = None) -> str:
    """Render to Graphviz DOT.

    Conventions: read edges solid, update edges dotted, control edges dashed;
    parameterized nodes are drawn double-circled.  Nodes are clustered by
    device so host-placed swap operations stand apart.
    """
    lines = ["digraph g {", "  rankdir=TB;"]
    by_device: dict[str, list[OpNode]] = {}
    for n in g.nodes:
        by_device.setdefault(n.device, []).append(n)
    for idx, device in enumerate(sorted(by_device)):
        lines.append(f'  subgraph cluster_{idx} {{')
        lines.append(f'    label="{device}";')
        for n in by_device[device]:
            shape = "doublecircle" if n.parameterized else "circle"
            label = n.name
            if order is not None and n.id in order:
                label = f"{n.name}\\n{order[n.id]}"
            lines.append(f'    n{n.id} [label="{label}" shape={shape}];')
        lines.append("  }")
    for e in sorted(g.edges, key=edge_sort_key):
        attrs = [f"style={_EDGE_STYLE[e.action]}"]
        if e.tensor is not None:
            attrs.append(f'label="t{e.tensor}"')
        lines.append(f'  n{e.src} -> n{e.dst} [{" ".join(attrs)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_trace_csv(events, path: str) -> None:
    """Write simulator trace rows as ``time,event,node,tensor,bytes``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "event", "node", "tensor", "bytes"])
        for ev in events:
            writer.writerow([
                ev.time,
                ev.event,
                "" if ev.node is None else ev.node,
                "" if ev.tensor is None else ev.tensor,
                ev.bytes,
            ])
