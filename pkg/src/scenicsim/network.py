"""Links, switch egress queues, and arbitrated NIC egress ports.

Topology is a single-switch star: every node owns an uplink (node to
switch) and the switch owns one downlink per node.  Serialization time is
tracked exactly: each port keeps its busy horizon in integer sub-nanosecond
units (1/numerator(gbps) ns), so fractional packet times accumulate without
drift and departures land on the first whole nanosecond after the true end.

A NIC egress port holds one control queue (ACKs, notifications, requests,
slow-path traffic) and one queue per SCU class.  Control drains first;
data classes share the residual bandwidth by packet-based round-robin
arbitration, which is what makes co-resident flows fair.

Switch downlinks mark ECN when their queue occupancy at enqueue exceeds
the configured threshold.  Lossless links never drop: an uplink will not
start serializing toward a full downlink (byte reservations make this
exact), and it resumes when the downlink drains.  Lossy links drop at the
full queue instead.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Deque, List, Optional

from .core import ConfigError, LinkSpec, Packet, SimTime
from .engine import DownlinkEnqueue, PacketArrival, PortFree
from .scu import MAX_SCUS, Arbiter

CONTROL_CLASS = None  # egress class for non-SCU traffic


class PortTimer:
    """Exact busy-time bookkeeping for one serializer.

    Time is held in units of 1/numerator(gbps) ns so fractional packet
    times chain without drift: a packet that was already waiting when the
    wire went quiet starts exactly at the previous packet's true end, even
    though the completion event fired on the whole-nanosecond grid.
    """

    def __init__(self, gbps: float):
        rate = Fraction(gbps)   # bits per nanosecond, exact
        self.p = rate.numerator
        self.q = rate.denominator
        self.free_units = 0     # time in units of 1/p ns
        self.busy_units = 0
        self.first_start_ns: Optional[int] = None
        self.last_end_units = 0

    def occupy(self, queued_at: SimTime, wire_bytes: int) -> SimTime:
        """Claim the serializer for a packet that has been waiting since
        ``queued_at``; returns the departure event time in whole ns."""
        p = self.p
        start = queued_at * p
        if start < self.free_units:
            start = self.free_units
        dur = 8 * wire_bytes * self.q
        end = start + dur
        self.free_units = end
        self.busy_units += dur
        if self.first_start_ns is None:
            self.first_start_ns = -(-start // p)
        self.last_end_units = end
        return -(-end // p)  # ceil to the next whole nanosecond

    def last_end_ns(self) -> SimTime:
        return -(-self.last_end_units // self.p)

    def busy_ns(self) -> float:
        return self.busy_units / self.p


class Downlink:
    """Switch egress queue plus serializer for one destination node."""

    def __init__(self, dst: int, spec: LinkSpec):
        self.dst = dst
        self.spec = spec
        self.timer = PortTimer(spec.gbps)
        self.queue: Deque[Packet] = deque()
        self.occupancy_bytes = 0
        self.reserved_bytes = 0
        self.busy = False
        self.waiters: List["NicEgress"] = []
        self.ecn_marks = 0
        self.drops = 0
        self.prop_delay_ns = spec.prop_delay_ns
        self.lossless = spec.lossless
        self.cap = spec.queue_cap_bytes
        self.ecn_threshold = spec.ecn_threshold_bytes

    def has_room(self, wire_bytes: int) -> bool:
        return self.occupancy_bytes + self.reserved_bytes + wire_bytes <= self.cap

    def reserve(self, wire_bytes: int) -> None:
        self.reserved_bytes += wire_bytes

    def link_transmit(self, pkt: Packet, world) -> bool:
        """Admit one packet to the queue; marks ECN, drops when lossy+full.

        Returns False when the packet was dropped."""
        if self.lossless:
            self.reserved_bytes -= pkt.wire_bytes
        elif self.occupancy_bytes + pkt.wire_bytes > self.cap:
            self.drops += 1
            world.count("drops", 1)
            world.dropped_wire_bytes += pkt.wire_bytes
            return False
        if self.occupancy_bytes > self.ecn_threshold:
            pkt.ecn_marked = True
            self.ecn_marks += 1
            world.count("ecn_marks", 1)
        self.queue.append((world.loop.now, pkt))
        self.occupancy_bytes += pkt.wire_bytes
        if not self.busy:
            self.try_start(world)
        return True

    def try_start(self, world) -> None:
        if self.busy or not self.queue:
            return
        queued_at, pkt = self.queue.popleft()
        self.occupancy_bytes -= pkt.wire_bytes
        self.busy = True
        dep = self.timer.occupy(queued_at, pkt.wire_bytes)
        world.schedule(dep, PortFree(self, pkt))
        if self.waiters:
            # Queue room appeared now; unblocked senders start no earlier.
            waiting, self.waiters = self.waiters, []
            for up in waiting:
                up.try_start(world, since=world.loop.now)

    def on_free(self, pkt: Packet, world) -> None:
        self.busy = False
        world.schedule(world.loop.now + self.prop_delay_ns,
                       PacketArrival(self.dst, pkt))
        self.try_start(world)


class NicEgress:
    """Arbitrated NIC egress port: control first, then round-robin SCUs."""

    def __init__(self, node_id: int, spec: LinkSpec):
        self.node_id = node_id
        self.spec = spec
        self.timer = PortTimer(spec.gbps)
        self.control: Deque[Packet] = deque()
        self.scu_queues: List[Deque[Packet]] = [deque() for _ in range(MAX_SCUS)]
        self.backlogged: set = set()
        self.arbiter = Arbiter(MAX_SCUS)
        self.busy = False
        self.queued_bytes = 0
        self.world = None  # wired by the world at build time

    def enqueue(self, pkt: Packet, scu_class: Optional[int]) -> None:
        if pkt.wire_bytes > self.spec.mtu_bytes:
            raise ConfigError(
                f"{pkt.wire_bytes}-byte packet exceeds the {self.spec.mtu_bytes}-byte MTU")
        world = self.world
        world.injected_wire_bytes += pkt.wire_bytes
        world.counters["injected_packets"] = world.counters.get("injected_packets", 0) + 1
        self.queued_bytes += pkt.wire_bytes
        if scu_class is CONTROL_CLASS:
            self.control.append((world.loop.now, pkt))
        else:
            self.scu_queues[scu_class].append((world.loop.now, pkt))
            self.backlogged.add(scu_class)
        if not self.busy:
            self.try_start(world)

    def _admissible(self, pkt: Packet, world) -> bool:
        down = world.downlinks[pkt.dst_node]
        if not down.lossless:
            return True
        if down.occupancy_bytes + down.reserved_bytes + pkt.wire_bytes <= down.cap:
            return True
        if self not in down.waiters:
            down.waiters.append(self)
        return False

    def try_start(self, world, since: Optional[SimTime] = None) -> None:
        if self.busy:
            return
        entry = None
        grant: Optional[int] = None
        if self.control and self._admissible(self.control[0][1], world):
            entry = self.control.popleft()
        elif self.backlogged:
            grant = self.arbiter.grant(self.backlogged)
            q = self.scu_queues[grant]
            if self._admissible(q[0][1], world):
                entry = q.popleft()
            else:
                # Backpressure: retry over the unblocked subset only.
                eligible = {
                    i for i in self.backlogged
                    if self._admissible(self.scu_queues[i][0][1], world)
                }
                grant = self.arbiter.grant(eligible)
                if grant is not None:
                    entry = self.scu_queues[grant].popleft()
        if entry is None:
            return
        queued_at, pkt = entry
        if since is not None and since > queued_at:
            queued_at = since
        if grant is not None and not self.scu_queues[grant]:
            self.backlogged.discard(grant)
        self.queued_bytes -= pkt.wire_bytes
        down = world.downlinks[pkt.dst_node]
        if down.lossless:
            down.reserved_bytes += pkt.wire_bytes
        self.busy = True
        dep = self.timer.occupy(queued_at, pkt.wire_bytes)
        world.schedule(dep, PortFree(self, pkt))

    def on_free(self, pkt: Packet, world) -> None:
        self.busy = False
        world.schedule(world.loop.now + self.spec.prop_delay_ns,
                       DownlinkEnqueue(pkt.dst_node, pkt))
        self.try_start(world)

    def backlog(self) -> int:
        return len(self.control) + sum(len(q) for q in self.scu_queues)
