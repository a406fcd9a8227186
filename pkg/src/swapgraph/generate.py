"""Deterministic synthetic training graphs for experiments and tests.

Each generator emits a valid graph shaped like one training step: a forward
chain whose activations are re-read by a mirrored backward chain, plus one
update op per parameter variable.  Activations and gradients get
``tensor_bytes``; parameter variables are small (64 bytes) so activation
memory dominates, as it does in the convolutional workloads this models.
No randomness: the same arguments always produce the identical graph.
"""

from __future__ import annotations

from .graph import (
    CompGraph,
    EdgeAction,
    EdgeRec,
    NodeKind,
    OpNode,
    Phase,
    TensorSpec,
)

PARAM_BYTES = 64


class _Builder:
    def __init__(self, device: str = "acc:0"):
        self.device = device
        self.nodes: list[OpNode] = []
        self.edges: list[EdgeRec] = []
        self.tensors: list[TensorSpec] = []

    def variable(self, name: str, size_bytes: int, scope: str = "params") -> tuple[int, int]:
        nid = len(self.nodes)
        self.nodes.append(OpNode(nid, name, scope=scope, kind=NodeKind.VARIABLE,
                                 parameterized=True, device=self.device, cost_hint=0.0))
        tid = len(self.tensors)
        self.tensors.append(TensorSpec(tid, nid, size_bytes=size_bytes))
        return nid, tid

    def op(self, name: str, scope: str, phase: Phase, reads: list[int],
           out_bytes: int, cost: float = 1.0) -> tuple[int, int]:
        nid = len(self.nodes)
        self.nodes.append(OpNode(nid, name, scope=scope, kind=NodeKind.COMPUTE,
                                 parameterized=False, phase=phase,
                                 device=self.device, cost_hint=cost))
        for tid in reads:
            self.edges.append(EdgeRec(self.tensors[tid].producer, nid,
                                      EdgeAction.READ, tid))
        out = len(self.tensors)
        self.tensors.append(TensorSpec(out, nid, size_bytes=out_bytes))
        return nid, out

    def update(self, src_tensor: int, var_node: int) -> None:
        self.edges.append(EdgeRec(self.tensors[src_tensor].producer, var_node,
                                  EdgeAction.UPDATE, src_tensor))

    def graph(self) -> CompGraph:
        return CompGraph(self.nodes, self.edges, self.tensors)


def _close_training_step(b: _Builder, activations: list[int],
                         weights: list[tuple[int, int]], tensor_bytes: int) -> None:
    """Append a backward chain over ``activations`` and one update per weight.

    ``activations`` is in forward order; the backward chain consumes it in
    reverse, each step also reading the previous gradient.  ``weights`` pairs
    (variable node, forward position) so each update op reads the gradient
    produced at the matching backward step.
    """
    grads: dict[int, int] = {}
    prev = None
    for pos in range(len(activations) - 1, -1, -1):
        reads = [activations[pos]]
        if prev is not None:
            reads.append(prev)
        _, gid = b.op(f"bwd_{pos}", f"grads/layer_{pos}", Phase.BACKWARD,
                      reads, tensor_bytes)
        grads[pos] = gid
        prev = gid
    for var_node, pos in weights:
        var_tensor = next(t.id for t in b.tensors if t.producer == var_node)
        _, out = b.op(f"upd_{pos}", f"optimizer/layer_{pos}", Phase.UPDATE,
                      [grads[pos], var_tensor], PARAM_BYTES)
        b.update(out, var_node)


def chain(n: int, tensor_bytes: int = 1 << 20) -> CompGraph:
    """Linear forward chain of ``n`` layers with mirrored backward pass.

    Every activation is read once by the next layer and once by its matching
    backward op, so without swapping all ``n`` activations are live when the
    backward pass starts.
    """
    if n < 1:
        raise ValueError("chain needs at least one layer")
    b = _Builder()
    _, act = b.variable("x_in", tensor_bytes)
    activations = []
    weights = []
    for i in range(n):
        w, _ = b.variable(f"w_{i}", PARAM_BYTES)
        w_tensor = next(t.id for t in b.tensors if t.producer == w)
        _, act = b.op(f"fwd_{i}", f"model/layer_{i}", Phase.FORWARD,
                      [act, w_tensor], tensor_bytes)
        activations.append(act)
        weights.append((w, i))
    _close_training_step(b, activations, weights, tensor_bytes)
    return b.graph()


def branchy(n: int, tensor_bytes: int = 1 << 20) -> CompGraph:
    """Forward chain with skip connections every third layer."""
    if n < 2:
        raise ValueError("branchy needs at least two layers")
    b = _Builder()
    _, act = b.variable("x_in", tensor_bytes)
    activations = []
    weights = []
    for i in range(n):
        w, _ = b.variable(f"w_{i}", PARAM_BYTES)
        w_tensor = next(t.id for t in b.tensors if t.producer == w)
        reads = [act, w_tensor]
        if i >= 4 and (i - 4) % 3 == 0:
            reads.append(activations[i - 4])  # skip connection
        _, act = b.op(f"fwd_{i}", f"model/layer_{i}", Phase.FORWARD,
                      reads, tensor_bytes)
        activations.append(act)
        weights.append((w, i))
    _close_training_step(b, activations, weights, tensor_bytes)
    return b.graph()


def unet(depth: int, tensor_bytes: int = 1 << 20) -> CompGraph:
    """Encoder/decoder with long skip edges from each encoder level.

    The skip from encoder level j to decoder level j spans the whole
    bottleneck, so its order gap grows with depth; these are the branches
    worth swapping.
    """
    if depth < 1:
        raise ValueError("unet needs depth >= 1")
    b = _Builder()
    _, act = b.variable("x_in", tensor_bytes)
    activations = []
    weights = []
    pos = 0

    def layer(name_prefix: str, reads: list[int]) -> int:
        nonlocal pos, act
        w, _ = b.variable(f"w_{pos}", PARAM_BYTES)
        w_tensor = next(t.id for t in b.tensors if t.producer == w)
        _, out = b.op(f"{name_prefix}_{pos}", f"model/{name_prefix}_{pos}",
                      Phase.FORWARD, reads + [w_tensor], tensor_bytes)
        activations.append(out)
        weights.append((w, pos))
        pos += 1
        act = out
        return out

    encoder_outs = []
    for _ in range(depth):
        encoder_outs.append(layer("enc", [act]))
    layer("mid", [act])
    for j in range(depth - 1, -1, -1):
        layer("dec", [act, encoder_outs[j]])
    _close_training_step(b, activations, weights, tensor_bytes)
    return b.graph()


def resnet_like(blocks: int, tensor_bytes: int = 1 << 20) -> CompGraph:
    """Chain of residual blocks: two convs plus an elementwise skip add.

    Only block outputs feed the backward pass, so the forward-to-backward
    candidate tensors number ``blocks`` + 1 (one per block plus the stem).
    """
    if blocks < 1:
        raise ValueError("resnet_like needs at least one block")
    b = _Builder()
    _, act = b.variable("x_in", tensor_bytes)
    block_outs = []
    weights = []
    w, _ = b.variable("w_stem", PARAM_BYTES)
    w_tensor = next(t.id for t in b.tensors if t.producer == w)
    _, r = b.op("stem", "model/stem", Phase.FORWARD, [act, w_tensor], tensor_bytes)
    block_outs.append(r)
    weights.append((w, 0))
    for k in range(1, blocks + 1):
        w1, _ = b.variable(f"w_{k}a", PARAM_BYTES)
        w1_tensor = next(t.id for t in b.tensors if t.producer == w1)
        _, t1 = b.op(f"conv_{k}a", f"model/block_{k}", Phase.FORWARD,
                     [r, w1_tensor], tensor_bytes)
        w2, _ = b.variable(f"w_{k}b", PARAM_BYTES)
        w2_tensor = next(t.id for t in b.tensors if t.producer == w2)
        _, t2 = b.op(f"conv_{k}b", f"model/block_{k}", Phase.FORWARD,
                     [t1, w2_tensor], tensor_bytes)
        _, r = b.op(f"join_{k}", f"model/block_{k}", Phase.FORWARD,
                    [t2, r], tensor_bytes)
        block_outs.append(r)
        weights.append((w1, k))
    _close_training_step(b, block_outs, weights, tensor_bytes)
    return b.graph()


TOPOLOGIES = {
    "chain": chain,
    "branchy": branchy,
    "unet": unet,
    "resnet_like": resnet_like,
}
