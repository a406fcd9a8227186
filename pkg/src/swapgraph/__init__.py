"""Graph rewriting that trades accelerator memory for host transfers.

The package models a training step as a directed graph of operations and
tensors, inserts swap-out/swap-in pairs on long-lived tensor edges, picks
control dependencies that time the swap-ins, and ships an interpreter plus a
discrete-event simulator to check that rewrites preserve semantics and
actually lower peak memory.
"""

from .graph import (
    HOST,
    CompGraph,
    CycleError,
    EdgeAction,
    EdgeRec,
    NodeKind,
    OpNode,
    Phase,
    TensorSpec,
    Violation,
    accelerator,
    ancestors,
    compute_node,
    constant_node,
    lifetime,
    reachable,
    topo_order,
    validate,
    variable_node,
)
from .control import CtrlQuery, attach_control, chain_rule, direct_order, fallback_control
from .rewriter import (
    RewriteConfig,
    RewriteError,
    RewriteReport,
    fuse_swap_ins,
    fuse_swap_outs,
    insert_swap_pair,
    resolve_phases,
    rewrite,
    select_candidates,
)
from .interp import interpret
from .sim import DeadlockError, SimConfig, SimReport, TraceEvent, free_step_oracle, simulate
from .serialize import (
    GraphFormatError,
    dumps,
    graph_from_dict,
    graph_to_dict,
    load_graph,
    loads,
    save_graph,
    to_dot,
    write_trace_csv,
)
from .generate import TOPOLOGIES, branchy, chain, resnet_like, unet

__version__ = "0.1.0"

__all__ = [
    "HOST",
    "CompGraph",
    "CtrlQuery",
    "CycleError",
    "DeadlockError",
    "EdgeAction",
    "EdgeRec",
    "GraphFormatError",
    "NodeKind",
    "OpNode",
    "Phase",
    "RewriteConfig",
    "RewriteError",
    "RewriteReport",
    "SimConfig",
    "SimReport",
    "TOPOLOGIES",
    "TensorSpec",
    "TraceEvent",
    "Violation",
    "accelerator",
    "ancestors",
    "attach_control",
    "branchy",
    "chain",
    "chain_rule",
    "compute_node",
    "constant_node",
    "direct_order",
    "dumps",
    "fallback_control",
    "free_step_oracle",
    "fuse_swap_ins",
    "fuse_swap_outs",
    "graph_from_dict",
    "graph_to_dict",
    "insert_swap_pair",
    "interpret",
    "lifetime",
    "load_graph",
    "loads",
    "reachable",
    "resnet_like",
    "resolve_phases",
    "rewrite",
    "save_graph",
    "select_candidates",
    "simulate",
    "to_dot",
    "topo_order",
    "unet",
    "validate",
    "variable_node",
    "write_trace_csv",
]
