"""Collective operations built on the offloaded transport.

BROADCAST pushes one buffer from a root to every node, either flat (the
root writes to each peer directly) or as a binary-tree relay in which a
node forwards the buffer to its children as soon as it has received all of
it.  GATHER concatenates per-node buffers into the root in rank order; the
incast pressure this creates is visible at the root's ingress queue.  Both
run until delivery completes and report exact per-node delivery times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

from .congestion import DualSlot, WindowCc
from .core import ConfigError, SimTime
from .sim import World
from .transport import Opcode, WorkRequest

_BASE = 1 << 40          # collective buffers live far above flow buffers
_GATHER_BASE = (1 << 40) + (1 << 39)  # distinct range: ops may share a world
_BULK_WINDOW = 1 << 40   # dedicated bulk transfers: effectively unwindowed


@dataclass
class CollectiveResult:
    delivery_ns: Dict[str, int] = field(default_factory=dict)
    finish_ns: int = 0
    root_egress_start_ns: int = 0
    root_egress_end_ns: int = 0


def _connect(world: World, a: int, b: int, scu_index: int = 0):
    """QP pair for one collective edge.  Collective traffic is bulk data on
    a dedicated path, so the slots carry an effectively unbounded window
    and the egress link stays busy end to end."""
    na, nb = world.nodes[a], world.nodes[b]
    qa = na.engine.create_qp(b, scu_index, flow_index=-1)
    qb = nb.engine.create_qp(a, scu_index, flow_index=-1)
    na.engine.pair(qa, qb)
    nb.engine.pair(qb, qa)
    na.engine.qps[qa].cc = DualSlot(WindowCc(_BULK_WINDOW))
    nb.engine.qps[qb].cc = DualSlot(WindowCc(_BULK_WINDOW))
    return qa, qb


def _tree_children(rank: int, n: int) -> List[int]:
    return [c for c in (2 * rank + 1, 2 * rank + 2) if c < n]


def broadcast(world: World, root: str, payload: bytes, mode: str = "flat",
              t_max: SimTime = 10 ** 13) -> CollectiveResult:
    """Deliver ``payload`` from ``root`` to every other node, bit exact."""
    if mode not in ("flat", "tree"):
        raise ConfigError(f"unknown broadcast mode {mode!r}")
    n = len(world.nodes)
    result = CollectiveResult()
    if n == 1 or not payload:
        result.delivery_ns[root] = world.loop.now
        return result

    root_id = world.node_id(root)
    # Rank order: root first, everyone else in world order.
    ranks = [root_id] + [i for i in range(n) if i != root_id]
    size = len(payload)
    for node in world.nodes:
        node.engine.register_mr(_BASE, size)
    world.nodes[root_id].addr_space.write(_BASE, payload)

    done = {root_id}
    pending_forward: Dict[int, List[int]] = {}

    if mode == "flat":
        edges = [(0, r) for r in range(1, n)]
    else:
        edges = [(parent, child)
                 for parent in range(n)
                 for child in _tree_children(parent, n)]

    qps: Dict[tuple, int] = {}
    child_qps: Dict[int, int] = {}
    qp_parent_rank: Dict[tuple, int] = {}
    for parent, child in edges:
        pa, ch = ranks[parent], ranks[child]
        qa, qb = _connect(world, pa, ch)
        qps[(parent, child)] = qa
        child_qps[child] = qb
        qp_parent_rank[(pa, qa)] = parent
        pending_forward.setdefault(parent, []).append(child)

    received: Dict[int, int] = {nid: 0 for nid in range(n)}

    def post_child(parent_rank: int, child_rank: int) -> None:
        pa = ranks[parent_rank]
        wr = WorkRequest(1000 + child_rank, Opcode.WRITE, _BASE, _BASE, size)
        world.nodes[pa].engine.post_work(qps[(parent_rank, child_rank)], wr)

    def start_forwarding(parent_rank: int) -> None:
        if mode == "flat":
            # all copies at once: the egress serializes them back to back
            for child_rank in pending_forward.pop(parent_rank, []):
                post_child(parent_rank, child_rank)
        else:
            # store-and-forward relay: one child at a time, so each child
            # receives at full line rate and can relay as early as possible
            todo = pending_forward.get(parent_rank)
            if todo:
                post_child(parent_rank, todo.pop(0))

    def on_wr_complete(node_id: int, qp, wr_id: int) -> None:
        parent_rank = qp_parent_rank.get((node_id, qp.qpn))
        if parent_rank is not None and mode == "tree":
            start_forwarding(parent_rank)

    def make_watcher(rank: int):
        nid = ranks[rank]

        def on_bytes(nbytes: int, now: SimTime) -> None:
            received[nid] += nbytes
            if received[nid] == size:
                done.add(nid)
                result.delivery_ns[world.nodes[nid].name] = now
                result.finish_ns = now
                start_forwarding(rank)

        return on_bytes

    for (parent, child) in edges:
        ch = ranks[child]
        world.delivery_watchers[(ch, child_qps[child])] = make_watcher(child)

    world.wr_complete_hook = on_wr_complete
    start_forwarding(0)
    world.run_while(lambda: len(done) < n, t_max)
    world.wr_complete_hook = None
    if len(done) < n:
        raise ConfigError("broadcast did not complete; disconnected node?")
    timer = world.nodes[root_id].egress.timer
    result.root_egress_start_ns = timer.first_start_ns or 0
    result.root_egress_end_ns = timer.last_end_ns()
    return result


def gather(world: World, root: str, payloads: List[bytes],
           t_max: SimTime = 10 ** 13):
    """Concatenate one buffer per node (rank order: root, then world order)
    into the root.  Returns (root buffer, CollectiveResult)."""
    n = len(world.nodes)
    if len(payloads) != n:
        raise ConfigError(f"need {n} payloads, got {len(payloads)}")
    root_id = world.node_id(root)
    ranks = [root_id] + [i for i in range(n) if i != root_id]
    sizes = [len(payloads[r]) for r in range(n)]
    offsets = [0] * n
    off = 0
    for r in range(n):
        offsets[r] = off
        off += sizes[r]
    total = off

    root_node = world.nodes[root_id]
    root_node.engine.register_mr(_GATHER_BASE, total)
    root_node.addr_space.write(_GATHER_BASE + offsets[0], payloads[0])

    remaining = total - sizes[0]
    result = CollectiveResult()
    result.delivery_ns[root] = world.loop.now
    state = {"remaining": remaining}

    for r in range(1, n):
        nid = ranks[r]
        node = world.nodes[nid]
        node.engine.register_mr(_GATHER_BASE, max(1, sizes[r]))
        node.addr_space.write(_GATHER_BASE, payloads[r])
        qa, qb = _connect(world, nid, root_id)
        if sizes[r] == 0:
            continue
        wr = WorkRequest(2000 + r, Opcode.WRITE, _GATHER_BASE, _GATHER_BASE + offsets[r], sizes[r])
        node.engine.post_work(qa, wr)

        def make_watcher(rank: int, qpn_root: int):
            def on_bytes(nbytes: int, now: SimTime) -> None:
                state["remaining"] -= nbytes
                if state["remaining"] == 0:
                    result.finish_ns = now
            return on_bytes

        world.delivery_watchers[(root_id, qb)] = make_watcher(r, qb)

    world.run_while(lambda: state["remaining"] > 0, t_max)
    if state["remaining"] > 0:
        raise ConfigError("gather did not complete; disconnected node?")
    buffer = root_node.addr_space.read(_GATHER_BASE, total)
    return buffer, result
