"""Discrete-event simulation of memory use and timing.

Model:

* one compute engine per device (or a single engine in serial-oracle mode);
  a ready node needs every read input resident and complete on its own
  device and every control predecessor finished.  Ties break by ascending
  order, then node id.
* an op's outputs are allocated when it starts; its inputs stay allocated
  until it finishes.  A tensor's residency on a device is dropped when its
  last local consumer finishes, its outbound transfers complete, and any
  update edges have committed.  Update edges commit the moment the producer
  (or the inbound transfer) completes.
* a read whose producer sits on another device enqueues a transfer of
  ``size_bytes`` as soon as the tensor is complete at the source.  With
  ``overlap_transfers`` each direction gets an independent channel,
  otherwise everything shares one.  The destination copy is allocated when
  the transfer starts.
* variables' tensors are permanently resident on their home device and are
  excluded from the peak numbers; copies made elsewhere count like any
  other tensor.  Peaks are sampled once per distinct timestamp, after all
  events at that instant have settled, so a zero-cost swap op handing one
  buffer to the next does not double-count.
* ``transfer_wait_total`` sums, over all nodes, the gap between the moment
  every producing op and control predecessor had finished and the moment
  the node's inputs were actually resident locally: the readiness delay
  attributable to data movement.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Any

from .graph import CompGraph, EdgeAction, HOST, SWAP_KINDS, is_accelerator

log = logging.getLogger("swapgraph")


class DeadlockError(RuntimeError):
    """No runnable work remains but reachable nodes have not executed."""


@dataclass(frozen=True)
class SimConfig:
    device_capacity_bytes: int = 16 * 2**30
    host_to_device_bandwidth: float = float(80 * 2**30)
    device_to_host_bandwidth: float = float(80 * 2**30)
    overlap_transfers: bool = True
    serial_engine: bool = False

    def __post_init__(self):
        if self.device_capacity_bytes <= 0:
            raise ValueError("device_capacity_bytes must be positive")
        if not self.host_to_device_bandwidth > 0:
            raise ValueError("host_to_device_bandwidth must be positive")
        if not self.device_to_host_bandwidth > 0:
            raise ValueError("device_to_host_bandwidth must be positive")

    @classmethod
    def serial_oracle(cls, device_capacity_bytes: int = 16 * 2**30) -> "SimConfig":
        """Single engine, instantaneous transfers: the reference schedule."""
        return cls(
            device_capacity_bytes=device_capacity_bytes,
            host_to_device_bandwidth=math.inf,
            device_to_host_bandwidth=math.inf,
            serial_engine=True,
        )


@dataclass(frozen=True)
class TraceEvent:
    time: float
    event: str  # start | finish | xfer_start | xfer_finish | alloc | free
    node: int | None = None
    tensor: int | None = None
    bytes: int = 0
    device: str | None = None


@dataclass
class SimReport:
    peak_device_bytes: int
    peak_host_bytes: int
    makespan: float
    transfer_time_total: float
    transfer_wait_total: float
    oom: bool
    event_trace: list[TraceEvent] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "peak_device_bytes": self.peak_device_bytes,
            "peak_host_bytes": self.peak_host_bytes,
            "makespan": self.makespan,
            "transfer_time_total": self.transfer_time_total,
            "transfer_wait_total": self.transfer_wait_total,
            "oom": self.oom,
            "event_trace": [
                {
                    "time": ev.time,
                    "event": ev.event,
                    "node": ev.node,
                    "tensor": ev.tensor,
                    "bytes": ev.bytes,
                    "device": ev.device,
                }
                for ev in self.event_trace
            ],
        }


class _Residency:
    __slots__ = ("refs", "complete", "permanent", "bytes")

    def __init__(self, refs: int, nbytes: int, permanent: bool = False):
        self.refs = refs
        self.complete = False
        self.permanent = permanent
        self.bytes = nbytes


def _exec_set(g: CompGraph) -> set[int]:
    seen = {n.id for n in g.nodes if n.parameterized}
    frontier = list(seen)
    while frontier:
        nid = frontier.pop()
        for e in g.out_edges(nid):
            if e.action is EdgeAction.UPDATE or e.dst in seen:
                continue
            seen.add(e.dst)
            frontier.append(e.dst)
    return {nid for nid in seen if not g.node_by_id[nid].parameterized}


def simulate(g: CompGraph, order: dict[int, int], cfg: SimConfig) -> SimReport:
    """Run the event simulation and report peaks, makespan and transfer time.

    The graph must be valid and every tensor that gets materialized must
    have a positive size.  Raises :class:`DeadlockError` when reachable
    nodes can never run (for instance, a control edge from a node that is
    itself blocked).
    """
    exec_nodes = _exec_set(g)
    for t in g.tensors:
        producer = g.node_by_id[t.producer]
        if (producer.parameterized or t.producer in exec_nodes) and t.size_bytes <= 0:
            raise ValueError(f"tensor {t.id} participates in simulation but has "
                             f"size_bytes={t.size_bytes}")

    # static consumer layout per tensor: read/update edge counts by device
    read_on: dict[int, dict[str, int]] = {t.id: {} for t in g.tensors}
    update_on: dict[int, dict[str, int]] = {t.id: {} for t in g.tensors}
    for e in g.edges:
        if e.tensor is None:
            continue
        dst = g.node_by_id.get(e.dst)
        if dst is None:
            continue
        if e.action is EdgeAction.READ and (e.dst in exec_nodes):
            read_on[e.tensor][dst.device] = read_on[e.tensor].get(dst.device, 0) + 1
        elif e.action is EdgeAction.UPDATE:
            update_on[e.tensor][dst.device] = update_on[e.tensor].get(dst.device, 0) + 1

    def home_of(tid: int) -> str:
        return g.node_by_id[g.tensor_by_id[tid].producer].device

    def remote_devices(tid: int) -> list[str]:
        home = home_of(tid)
        devs = set(read_on[tid]) | set(update_on[tid])
        devs.discard(home)
        return sorted(devs)

    resident: dict[tuple[int, str], _Residency] = {}
    cur_bytes: dict[str, int] = {}
    peak_bytes: dict[str, int] = {}
    trace: list[TraceEvent] = []
    events: list[tuple[float, int, str, Any]] = []
    seq = 0
    transfer_time_total = 0.0
    transfer_wait_total = 0.0
    makespan = 0.0
    finish_time: dict[int, float] = {}

    def push_event(time: float, kind: str, payload):
        nonlocal seq
        heapq.heappush(events, (time, seq, kind, payload))
        seq += 1

    def alloc(tid: int, device: str, refs: int, *, permanent=False, nbytes=None):
        r = _Residency(refs, g.tensor_by_id[tid].size_bytes if nbytes is None else nbytes,
                       permanent=permanent)
        resident[(tid, device)] = r
        if not permanent:
            cur_bytes[device] = cur_bytes.get(device, 0) + r.bytes
        return r

    def emit(time, event, *, node=None, tensor=None, nbytes=0, device=None):
        trace.append(TraceEvent(time, event, node=node, tensor=tensor,
                                bytes=nbytes, device=device))

    def drop_if_done(time: float, tid: int, device: str, trigger: int | None):
        r = resident.get((tid, device))
        if r is None or r.permanent or r.refs > 0 or not r.complete:
            return
        del resident[(tid, device)]
        cur_bytes[device] = cur_bytes.get(device, 0) - r.bytes
        emit(time, "free", node=trigger, tensor=tid, nbytes=r.bytes, device=device)

    # readiness bookkeeping
    pending: dict[int, int] = {}
    for nid in exec_nodes:
        node = g.node_by_id[nid]
        count = 0
        for e in g.in_edges(nid):
            if e.action is EdgeAction.READ:
                producer = g.node_by_id[g.tensor_by_id[e.tensor].producer]
                if producer.parameterized and producer.device == node.device:
                    continue  # variable value is always at hand locally
                count += 1
            elif e.action is EdgeAction.CONTROL and e.src in exec_nodes:
                count += 1
        pending[nid] = count

    ready: list[tuple[int, int]] = []
    done: set[int] = set()
    running: set[int] = set()

    def _origin_producer(tid: int) -> int:
        # swap chains are data movement, not computation: charge their whole
        # delay to transfers by walking back to the first non-swap producer
        for _ in range(len(g.nodes) + 1):
            producer = g.tensor_by_id[tid].producer
            if g.node_by_id[producer].kind not in SWAP_KINDS:
                return producer
            ins = [e for e in g.in_edges(producer) if e.action is EdgeAction.READ]
            if len(ins) != 1:
                return producer
            tid = ins[0].tensor
        return g.tensor_by_id[tid].producer

    def unblocked_at(nid: int) -> float:
        # the node could have started here were every input locally resident
        # the moment its originating op finished; any later readiness is time
        # spent waiting on data movement
        t = 0.0
        for e in g.in_edges(nid):
            if e.action is EdgeAction.READ:
                t = max(t, finish_time.get(_origin_producer(e.tensor), 0.0))
            elif e.action is EdgeAction.CONTROL and e.src in exec_nodes:
                t = max(t, finish_time.get(e.src, 0.0))
        return t

    def release(time: float, nid: int):
        nonlocal transfer_wait_total
        pending[nid] -= 1
        if pending[nid] == 0:
            transfer_wait_total += max(0.0, time - unblocked_at(nid))
            heapq.heappush(ready, (order[nid], nid))

    def on_complete(time: float, tid: int, device: str):
        """Tensor data is now usable on ``device``: wake consumers, commit updates."""
        r = resident[(tid, device)]
        r.complete = True
        for e in g.consumer_edges(tid):
            dst = g.node_by_id.get(e.dst)
            if dst is None:
                continue
            if e.action is EdgeAction.READ and e.dst in exec_nodes and dst.device == device:
                if e.dst not in done and e.dst not in running:
                    release(time, e.dst)
            elif e.action is EdgeAction.UPDATE and dst.device == device:
                r.refs -= 1  # commit into the variable absorbs this reference
        drop_if_done(time, tid, device, g.tensor_by_id[tid].producer
                     if device == home_of(tid) else None)
        if device == home_of(tid):
            for dev in remote_devices(tid):
                enqueue_transfer(time, tid, home_of(tid), dev)

    # transfer machinery
    channel_queue: dict[str, list] = {}
    channel_free: dict[str, float] = {}

    def channel_key(src_dev: str, dst_dev: str) -> str:
        if not cfg.overlap_transfers:
            return "xfer"
        return f"{src_dev}->{dst_dev}"

    def bandwidth_for(dst_dev: str) -> float:
        if cfg.serial_engine:
            return math.inf
        return (cfg.device_to_host_bandwidth if dst_dev == HOST
                else cfg.host_to_device_bandwidth)

    def enqueue_transfer(time: float, tid: int, src_dev: str, dst_dev: str):
        nonlocal seq
        key = channel_key(src_dev, dst_dev)
        heapq.heappush(channel_queue.setdefault(key, []),
                       (time, tid, dst_dev, seq, src_dev))
        seq += 1

    def start_transfers(time: float) -> bool:
        nonlocal transfer_time_total
        started = False
        for key in sorted(channel_queue):
            queue = channel_queue[key]
            while queue and channel_free.get(key, 0.0) <= time:
                _, tid, dst_dev, _, src_dev = heapq.heappop(queue)
                size = g.tensor_by_id[tid].size_bytes
                duration = 0.0 if math.isinf(bandwidth_for(dst_dev)) else size / bandwidth_for(dst_dev)
                refs = read_on[tid].get(dst_dev, 0) + update_on[tid].get(dst_dev, 0)
                alloc(tid, dst_dev, refs)
                emit(time, "alloc", tensor=tid, nbytes=size, device=dst_dev)
                emit(time, "xfer_start", tensor=tid, nbytes=size, device=dst_dev)
                channel_free[key] = time + duration
                transfer_time_total += duration
                push_event(time + duration, "xfer_finish", (tid, src_dev, dst_dev))
                started = True
        return started

    # compute engines
    engine_free: dict[str, float] = {}

    def engine_key(nid: int) -> str:
        return "serial" if cfg.serial_engine else g.node_by_id[nid].device

    def start_nodes(time: float) -> bool:
        started = False
        deferred = []
        while ready:
            gamma, nid = heapq.heappop(ready)
            key = engine_key(nid)
            if engine_free.get(key, 0.0) > time:
                deferred.append((gamma, nid))
                continue
            node = g.node_by_id[nid]
            running.add(nid)
            emit(time, "start", node=nid, device=node.device)
            for t in g.produced_tensors(nid):
                refs = (read_on[t.id].get(node.device, 0)
                        + update_on[t.id].get(node.device, 0)
                        + len(remote_devices(t.id)))
                alloc(t.id, node.device, refs)
                emit(time, "alloc", node=nid, tensor=t.id, nbytes=t.size_bytes,
                     device=node.device)
            engine_free[key] = time + node.cost_hint
            push_event(time + node.cost_hint, "node_finish", nid)
            started = True
        for item in deferred:
            heapq.heappush(ready, item)
        return started

    def finish_node(time: float, nid: int):
        node = g.node_by_id[nid]
        running.discard(nid)
        done.add(nid)
        finish_time[nid] = time
        emit(time, "finish", node=nid, device=node.device)
        for e in g.in_edges(nid):
            if e.action is not EdgeAction.READ:
                continue
            producer = g.node_by_id[g.tensor_by_id[e.tensor].producer]
            if producer.parameterized and producer.device == node.device:
                continue  # read straight out of the variable's permanent slot
            r = resident.get((e.tensor, node.device))
            if r is not None and not r.permanent:
                r.refs -= 1
                drop_if_done(time, e.tensor, node.device, nid)
        for e in g.out_edges(nid):
            if e.action is EdgeAction.CONTROL and e.dst in exec_nodes:
                if e.dst not in done and e.dst not in running:
                    release(time, e.dst)
        for t in g.produced_tensors(nid):
            on_complete(time, t.id, node.device)

    def finish_transfer(time: float, tid: int, src_dev: str, dst_dev: str):
        emit(time, "xfer_finish", tensor=tid, nbytes=g.tensor_by_id[tid].size_bytes,
             device=dst_dev)
        src = resident.get((tid, src_dev))
        if src is not None and not src.permanent:
            src.refs -= 1
            drop_if_done(time, tid, src_dev, None)
        on_complete_remote(time, tid, dst_dev)

    def on_complete_remote(time: float, tid: int, device: str):
        # like on_complete but never re-fans out transfers: copies are leaves
        r = resident[(tid, device)]
        r.complete = True
        for e in g.consumer_edges(tid):
            dst = g.node_by_id.get(e.dst)
            if dst is None or dst.device != device:
                continue
            if e.action is EdgeAction.READ and e.dst in exec_nodes:
                if e.dst not in done and e.dst not in running:
                    release(time, e.dst)
            elif e.action is EdgeAction.UPDATE:
                r.refs -= 1
        drop_if_done(time, tid, device, None)

    # seed: variables hold their tensors from the start
    for n in g.nodes:
        if not n.parameterized:
            continue
        for t in g.produced_tensors(n.id):
            alloc(t.id, n.device, 0, permanent=True)
            resident[(t.id, n.device)].complete = True
            for dev in remote_devices(t.id):
                enqueue_transfer(0.0, t.id, n.device, dev)

    for nid in sorted(exec_nodes):
        if pending[nid] == 0:
            heapq.heappush(ready, (order[nid], nid))

    time = 0.0
    while True:
        # settle everything that can happen at this instant, then sample
        while True:
            moved = False
            while events and events[0][0] <= time:
                _, _, kind, payload = heapq.heappop(events)
                if kind == "node_finish":
                    finish_node(time, payload)
                else:
                    finish_transfer(time, *payload)
                moved = True
            if start_nodes(time):
                moved = True
            if start_transfers(time):
                moved = True
            if not moved:
                break
        for dev, used in cur_bytes.items():
            if used > peak_bytes.get(dev, 0):
                peak_bytes[dev] = used
        makespan = max(makespan, time)
        if not events:
            break
        time = events[0][0]

    if done != exec_nodes:
        blocked = sorted(exec_nodes - done)
        detail = []
        for nid in blocked[:8]:
            node = g.node_by_id[nid]
            waits = []
            for e in g.in_edges(nid):
                if e.action is EdgeAction.READ:
                    r = resident.get((e.tensor, node.device))
                    producer = g.node_by_id[g.tensor_by_id[e.tensor].producer]
                    if producer.parameterized and producer.device == node.device:
                        continue
                    if r is None or not r.complete:
                        waits.append(f"tensor {e.tensor} on {node.device}")
                elif e.action is EdgeAction.CONTROL and e.src in exec_nodes and e.src not in done:
                    waits.append(f"control from node {e.src}")
            detail.append(f"node {nid} waiting on: {', '.join(waits) or 'unknown'}")
        raise DeadlockError("simulation stalled; " + "; ".join(detail))

    device_peak = max(
        (v for d, v in peak_bytes.items() if is_accelerator(d)), default=0)
    host_peak = peak_bytes.get(HOST, 0)
    report = SimReport(
        peak_device_bytes=device_peak,
        peak_host_bytes=host_peak,
        makespan=makespan,
        transfer_time_total=transfer_time_total,
        transfer_wait_total=transfer_wait_total,
        oom=device_peak > cfg.device_capacity_bytes,
        event_trace=trace,
    )
    log.info("simulate: device peak %d B, host peak %d B, makespan %.3f, transfers %.3f",
             device_peak, host_peak, makespan, transfer_time_total)
    return report


def free_step_oracle(g: CompGraph, order: dict[int, int], tensor_id: int) -> int:
    """Order step at which the tensor's refcount reaches zero in a serial run.

    Walks the reachable ops in ascending (order, id), decrementing one
    reference per read edge as its consumer executes; update edges commit
    when the producer itself executes.  Independent of the event simulator,
    and must agree with its serial-mode free events.
    """
    t = g.tensor_by_id[tensor_id]
    exec_nodes = _exec_set(g)
    reads = [e for e in g.consumer_edges(tensor_id)
             if e.action is EdgeAction.READ and e.dst in exec_nodes]
    updates = [e for e in g.consumer_edges(tensor_id) if e.action is EdgeAction.UPDATE]
    refs = len(reads) + len(updates)
    birth = order[t.producer]
    if refs == 0:
        return birth
    read_counts: dict[int, int] = {}
    for e in reads:
        read_counts[e.dst] = read_counts.get(e.dst, 0) + 1
    for nid in sorted(exec_nodes, key=lambda n: (order[n], n)):
        if nid == t.producer:
            refs -= len(updates)
            if refs <= 0:
                return birth
        if nid in read_counts:
            refs -= read_counts[nid]
            if refs <= 0:
                return order[nid]
    return max(order[e.dst] for e in reads) if reads else birth
