"""Reliable RDMA-style transport: queue pairs, WRITE/READ work requests,
MTU segmentation, responder ACKs, and per-QP completion counters.

Each side of a connection owns one QueuePair with independent sequence
spaces: ``send_psn`` numbers everything this side transmits (write data,
read requests, read responses) and ``expect_psn`` validates everything it
receives.  Write data is gated by the QP's congestion-control slot; read
responses stream back ungated by default (the arbiter still shares the
egress link); read requests are control traffic and bypass both.

Congestion signaling: a receiver that sees an ECN-marked data segment
notifies the sender with at most one CNP per QP per notification interval,
and a requester additionally feeds an EcnEcho into its own slot for every
marked segment it receives.  ACKs retire outstanding segments cumulatively
and clock the window algorithm.

Loss handling is optional: links are lossless by default and out-of-order
arrival on them is a simulation bug.  With a lossy link, write traffic
recovers by go-back-N from the oldest unacknowledged sequence number on a
retransmission timeout; read flows are not supported on lossy paths.

Address translation is modeled but non-blocking: every data access runs
its pages through the node TLB (misses and faults are real), and miss
latency accumulates in a per-node stall counter instead of delaying
events.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, List, Optional

from . import congestion as cc
from .core import (AccessFault, ConfigError, HeaderKind, InvariantViolation,
                   Packet, RoceFlow, SimTime)
from .engine import CcTimer, QpPace, RetransmitCheck


class Opcode(Enum):
    WRITE = "write"
    READ = "read"


@dataclass(frozen=True)
class WorkRequest:
    wr_id: int
    opcode: Opcode
    local_addr: int
    remote_addr: int
    len_bytes: int

    def __post_init__(self):
        if self.len_bytes <= 0:
            raise ConfigError("work request length must be positive")


@dataclass(slots=True)
class RoceHeader:
    op: str                   # 'data' | 'read_req' | 'ack' | 'cnp'
    dst_qpn: int
    src_qpn: int
    wr_id: int = 0
    offset: int = 0
    addr: int = 0             # write data: target vaddr; read_req: source vaddr
    total_len: int = 0
    ack_psn: int = -1
    is_read_resp: bool = False
    last: bool = False
    error: bool = False


@dataclass(slots=True)
class SendSeg:
    wr_id: int
    offset: int
    nbytes: int
    last: bool
    addr: int


@dataclass(slots=True)
class OutSeg:
    psn: int
    nbytes: int
    wr_id: int
    offset: int
    last: bool
    sent_at: SimTime


@dataclass
class WrState:
    wr: WorkRequest
    remaining: int
    segments: int
    done: bool = False
    error: bool = False


class QpState(Enum):
    INIT = "init"
    READY = "ready"
    ERROR = "error"


class QueuePair:
    def __init__(self, qpn: int, peer_node: int, scu_index: int, slot: cc.DualSlot,
                 flow_index: int = -1):
        self.qpn = qpn
        self.peer_node = peer_node
        self.peer_qpn = -1
        self.scu_index = scu_index
        self.flow_index = flow_index
        self.flow_key = RoceFlow(qpn)
        self.steer_cache = (-1, None)  # (steering table version, scu index)
        self.state = QpState.INIT
        self.send_psn = 0
        self.expect_psn = 0
        self.sendq: Deque[SendSeg] = deque()
        self.respq: Deque[SendSeg] = deque()  # read responses under symmetric gating
        self.outstanding: Deque[OutSeg] = deque()
        self.in_flight_bytes = 0
        self.completion_counter = 0
        self.error_completions = 0
        self._polled = 0
        self.cc = slot
        self.wr_states: Dict[int, WrState] = {}
        self.pace_next: SimTime = 0
        self.pace_event_at: Optional[SimTime] = None
        self.cc_timer_at: Optional[SimTime] = None
        self.retx_armed = False
        self.last_cnp_at: SimTime = -(1 << 60)
        self.ack_run = 0
        self.delivered_payload_bytes = 0
        self.retransmits = 0


@dataclass(frozen=True)
class CompletionInfo:
    count: int
    error: bool


@dataclass
class TransportConfig:
    mtu_payload: int = 4096
    header_bytes: int = 82
    ack_every: int = 1             # coalesced ACK: one per N data segments
    cnp_interval_ns: int = 50_000
    rto_ns: int = 1_000_000
    symmetric_read_gating: bool = False
    lossless: bool = True

    def __post_init__(self):
        if self.mtu_payload <= 0 or self.header_bytes < 0:
            raise ConfigError("bad segment sizing")
        if self.ack_every < 1:
            raise ConfigError("ack_every must be at least 1")


class RoceEngine:
    """Per-node transport state machine.

    The engine is owned by the event loop; ``poll_completion`` is the one
    surface safe to call from outside between events (it only reads and
    advances a private cursor).
    """

    def __init__(self, node, config: TransportConfig):
        self.node = node
        self.config = config
        self.qps: Dict[int, QueuePair] = {}
        self._next_qpn = 1

    # -- setup ---------------------------------------------------------

    def create_qp(self, peer_node: int, scu_index: int, flow_index: int = -1) -> int:
        """New QP bound to an SCU; the steering table learns the flow."""
        qpn = self._next_qpn
        self._next_qpn += 1
        slot = self.node.world.new_cc_slot()
        qp = QueuePair(qpn, peer_node, scu_index, slot, flow_index)
        # Raises ConfigError when scu_index is out of range.
        self.node.steering.bind(RoceFlow(qpn), scu_index)
        self.qps[qpn] = qp
        return qpn

    def pair(self, qpn: int, peer_qpn: int) -> None:
        qp = self.qps[qpn]
        qp.peer_qpn = peer_qpn
        qp.state = QpState.READY

    def register_mr(self, base: int, length: int):
        return self.node.addr_space.register(base, length, self.node.world.loop.now)

    # -- posting -------------------------------------------------------

    def post_work(self, qpn: int, wr: WorkRequest) -> None:
        qp = self.qps[qpn]
        if qp.state is not QpState.READY:
            raise ConfigError(f"QP {qpn} not ready ({qp.state.value})")
        span = self.node.addr_space.region_of(wr.local_addr, wr.len_bytes)
        if span is None:
            qp.state = QpState.ERROR
            qp.error_completions += 1
            raise AccessFault(
                f"local range {wr.local_addr:#x}+{wr.len_bytes} is unregistered")
        mtu = self.config.mtu_payload
        nseg = -(-wr.len_bytes // mtu)
        if wr.opcode is Opcode.WRITE:
            qp.wr_states[wr.wr_id] = WrState(wr, wr.len_bytes, nseg)
            off = 0
            while off < wr.len_bytes:
                n = min(mtu, wr.len_bytes - off)
                qp.sendq.append(SendSeg(wr.wr_id, off, n, off + n == wr.len_bytes,
                                        wr.remote_addr + off))
                off += n
            self.try_send(qp)
        else:
            qp.wr_states[wr.wr_id] = WrState(wr, wr.len_bytes, nseg)
            self._send_read_request(qp, wr)

    def segment_count(self, len_bytes: int) -> int:
        return -(-len_bytes // self.config.mtu_payload)

    # -- transmit path --------------------------------------------------

    def _data_packet(self, qp: QueuePair, hdr: RoceHeader, nbytes: int,
                     payload: Optional[bytes], psn: int) -> Packet:
        world = self.node.world
        return Packet(
            id=world.new_packet_id(), flow=qp.flow_key, kind=HeaderKind.ROCE_BTH,
            wire_bytes=nbytes + self.config.header_bytes, payload_len=nbytes,
            payload=payload, psn=psn,
            src_node=self.node.node_id, dst_node=qp.peer_node,
            src_subnet=self.node.subnet, meta=hdr)

    def _control_packet(self, qp: QueuePair, hdr: RoceHeader,
                        psn: Optional[int]) -> Packet:
        world = self.node.world
        return Packet(
            id=world.new_packet_id(), flow=qp.flow_key, kind=HeaderKind.ROCE_BTH,
            wire_bytes=self.config.header_bytes, payload_len=0, payload=None,
            psn=psn if psn is not None else 0,
            src_node=self.node.node_id, dst_node=qp.peer_node,
            src_subnet=self.node.subnet, meta=hdr)

    def _send_read_request(self, qp: QueuePair, wr: WorkRequest) -> None:
        hdr = RoceHeader("read_req", qp.peer_qpn, qp.qpn, wr_id=wr.wr_id,
                         addr=wr.remote_addr, total_len=wr.len_bytes)
        pkt = self._control_packet(qp, hdr, qp.send_psn)
        qp.send_psn += 1  # sequenced, but completes via the response stream
        self.node.egress.enqueue(pkt, None)

    def try_send(self, qp: QueuePair) -> None:
        """Drain the send queue as far as the CC slot permits."""
        now = self.node.world.loop.now
        while qp.sendq:
            decision = qp.cc.decision()
            seg = qp.sendq[0]
            if seg.nbytes > decision.allowance_bytes:
                break  # ACKs will reopen the window
            rate = decision.pacing_rate_bps
            if rate:
                due = qp.pace_next
                if due > now:
                    if qp.pace_event_at is None or qp.pace_event_at > due:
                        qp.pace_event_at = due
                        self.node.world.schedule(
                            due, QpPace(self.node.node_id, qp.qpn))
                    break
            qp.sendq.popleft()
            wrst = qp.wr_states[seg.wr_id]
            payload = None
            if self.node.addr_space.materialize:
                payload = self.node.addr_space.read(
                    wrst.wr.local_addr + seg.offset, seg.nbytes)
            self.node.tlb_stall_ns += self.node.addr_space.access_latency(
                wrst.wr.local_addr + seg.offset, seg.nbytes, now)
            hdr = RoceHeader("data", qp.peer_qpn, qp.qpn, wr_id=seg.wr_id,
                             offset=seg.offset, addr=seg.addr, last=seg.last)
            pkt = self._data_packet(qp, hdr, seg.nbytes, payload, qp.send_psn)
            qp.send_psn += 1
            qp.outstanding.append(
                OutSeg(pkt.psn, seg.nbytes, seg.wr_id, seg.offset, seg.last, now))
            qp.in_flight_bytes += seg.nbytes
            self._feed_cc(qp, cc.Sent(seg.nbytes))
            if rate:
                qp.pace_next = max(now, qp.pace_next) + math.ceil(
                    seg.nbytes * 8e9 / rate)
            self.node.egress.enqueue(pkt, qp.scu_index)
            self._arm_retransmit(qp, now)

    def on_pace(self, qpn: int) -> None:
        qp = self.qps.get(qpn)
        if qp is None:
            return
        qp.pace_event_at = None
        self.try_send(qp)
        if qp.respq:
            self._drain_responses(qp)

    def _feed_cc(self, qp: QueuePair, signal) -> None:
        now = self.node.world.loop.now
        qp.cc.update(signal, now)
        self._arm_cc_timer(qp)

    def _arm_cc_timer(self, qp: QueuePair) -> None:
        due = qp.cc.next_deadline()
        if due is None:
            return
        # A shadow instantiated behind schedule can report an overdue
        # deadline; fire immediately and let catch-up absorb the backlog.
        due = max(due, self.node.world.loop.now)
        if qp.cc_timer_at is not None and qp.cc_timer_at <= due:
            return
        qp.cc_timer_at = due
        self.node.world.schedule(due, CcTimer(self.node.node_id, qp.qpn))

    def on_cc_timer(self, qpn: int) -> None:
        qp = self.qps.get(qpn)
        if qp is None:
            return
        now = self.node.world.loop.now
        qp.cc_timer_at = None
        qp.cc.update(cc.Timer(now), now)
        self._arm_cc_timer(qp)
        self.try_send(qp)
        if qp.respq:
            self._drain_responses(qp)

    def _arm_retransmit(self, qp: QueuePair, now: SimTime) -> None:
        if self.config.lossless or qp.retx_armed or not qp.outstanding:
            return
        qp.retx_armed = True
        self.node.world.schedule(qp.outstanding[0].sent_at + self.config.rto_ns,
                                 RetransmitCheck(self.node.node_id, qp.qpn))

    def on_retransmit_check(self, qpn: int) -> None:
        qp = self.qps.get(qpn)
        if qp is None:
            return
        qp.retx_armed = False
        now = self.node.world.loop.now
        if not qp.outstanding or qp.state is QpState.ERROR:
            return
        oldest = qp.outstanding[0]
        if now - oldest.sent_at < self.config.rto_ns:
            self._arm_retransmit(qp, now)
            return
        # Go-back-N: replay every unacknowledged segment, same PSNs.
        for seg in qp.outstanding:
            wrst = qp.wr_states[seg.wr_id]
            payload = None
            if self.node.addr_space.materialize:
                payload = self.node.addr_space.read(
                    wrst.wr.local_addr + seg.offset, seg.nbytes)
            hdr = RoceHeader("data", qp.peer_qpn, qp.qpn, wr_id=seg.wr_id,
                             offset=seg.offset, addr=wrst.wr.remote_addr + seg.offset,
                             last=seg.last)
            pkt = self._data_packet(qp, hdr, seg.nbytes, payload, seg.psn)
            seg.sent_at = now
            qp.retransmits += 1
            self.node.egress.enqueue(pkt, qp.scu_index)
        self._arm_retransmit(qp, now)

    # -- receive path ----------------------------------------------------

    def on_rx(self, pkt: Packet) -> None:
        hdr: RoceHeader = pkt.meta
        qp = self.qps.get(hdr.dst_qpn)
        if qp is None:
            self.node.world.count("roce_unknown_qp", 1)
            return
        now = self.node.world.loop.now
        op = hdr.op
        if op == "ack":
            if pkt.ecn_marked:
                self._feed_cc(qp, cc.EcnEcho(now))
            self._on_ack(qp, hdr, now)
        elif op == "cnp":
            self._feed_cc(qp, cc.Cnp(now))
            self.try_send(qp)
        elif op == "read_req":
            self._on_read_request(qp, pkt, hdr, now)
        elif hdr.is_read_resp:
            if pkt.ecn_marked:
                self._feed_cc(qp, cc.EcnEcho(now))
                self._maybe_cnp(qp, now)
            self._on_read_response(qp, pkt, hdr, now)
        else:
            self._on_write_data(qp, pkt, hdr, now)

    def _in_sequence(self, qp: QueuePair, pkt: Packet, now: SimTime,
                     ack_dup: bool) -> bool:
        """Sequence check for an incoming sequenced segment."""
        if pkt.psn == qp.expect_psn:
            qp.expect_psn += 1
            return True
        if pkt.psn < qp.expect_psn:
            self.node.world.count("roce_duplicates", 1)
            if ack_dup:
                self._emit_ack(qp, now)
            return False
        if self.config.lossless:
            raise InvariantViolation(
                f"out-of-order PSN {pkt.psn} (expect {qp.expect_psn}) on a lossless link")
        self.node.world.count("roce_gaps", 1)
        if ack_dup:
            self._emit_ack(qp, now)
        return False

    def _on_write_data(self, qp: QueuePair, pkt: Packet, hdr: RoceHeader,
                       now: SimTime) -> None:
        if qp.state is QpState.ERROR:
            self.node.world.count("roce_discarded_on_error", 1)
            return
        if pkt.ecn_marked:
            self._maybe_cnp(qp, now)
        if not self._in_sequence(qp, pkt, now, ack_dup=True):
            return
        space = self.node.addr_space
        try:
            self.node.tlb_stall_ns += space.access_latency(hdr.addr, pkt.payload_len, now)
            if pkt.payload is not None:
                space.write(hdr.addr, pkt.payload)
            elif space.region_of(hdr.addr, pkt.payload_len) is None:
                raise AccessFault(f"write target {hdr.addr:#x} unregistered")
        except AccessFault:
            # The faulting segment is not accepted: acknowledge only what
            # preceded it, flag the error, and poison the QP.
            qp.state = QpState.ERROR
            qp.expect_psn = pkt.psn
            self._emit_ack(qp, now, error=True)
            return
        qp.delivered_payload_bytes += pkt.payload_len
        self.node.deliver_payload(qp, pkt)
        qp.ack_run += 1
        if qp.ack_run >= self.config.ack_every or hdr.last:
            self._emit_ack(qp, now)

    def _on_read_request(self, qp: QueuePair, pkt: Packet, hdr: RoceHeader,
                         now: SimTime) -> None:
        if qp.state is QpState.ERROR:
            self.node.world.count("roce_discarded_on_error", 1)
            return
        if not self._in_sequence(qp, pkt, now, ack_dup=False):
            return
        space = self.node.addr_space
        if space.region_of(hdr.addr, hdr.total_len) is None:
            qp.state = QpState.ERROR
            self._emit_ack(qp, now, error=True)
            return
        mtu = self.config.mtu_payload
        off = 0
        gated = self.config.symmetric_read_gating
        while off < hdr.total_len:
            n = min(mtu, hdr.total_len - off)
            last = off + n == hdr.total_len
            if gated:
                qp.respq.append(SendSeg(hdr.wr_id, off, n, last, hdr.addr + off))
            else:
                self._send_read_response(qp, SendSeg(hdr.wr_id, off, n, last,
                                                     hdr.addr + off), now)
            off += n
        if gated:
            self._drain_responses(qp)

    def _send_read_response(self, qp: QueuePair, seg: SendSeg, now: SimTime) -> None:
        space = self.node.addr_space
        self.node.tlb_stall_ns += space.access_latency(seg.addr, seg.nbytes, now)
        payload = space.read(seg.addr, seg.nbytes) if space.materialize else None
        rh = RoceHeader("data", qp.peer_qpn, qp.qpn, wr_id=seg.wr_id,
                        offset=seg.offset, is_read_resp=True, last=seg.last)
        rpkt = self._data_packet(qp, rh, seg.nbytes, payload, qp.send_psn)
        qp.send_psn += 1
        self.node.egress.enqueue(rpkt, qp.scu_index)

    def _drain_responses(self, qp: QueuePair) -> None:
        """Pace read responses by the slot's rate.  Responses retire without
        ACKs, so the window allowance does not apply to them."""
        now = self.node.world.loop.now
        while qp.respq:
            rate = qp.cc.decision().pacing_rate_bps
            if rate:
                due = qp.pace_next
                if due > now:
                    if qp.pace_event_at is None or qp.pace_event_at > due:
                        qp.pace_event_at = due
                        self.node.world.schedule(
                            due, QpPace(self.node.node_id, qp.qpn))
                    return
            seg = qp.respq.popleft()
            self._send_read_response(qp, seg, now)
            self._feed_cc(qp, cc.Sent(seg.nbytes))
            if rate:
                qp.pace_next = max(now, qp.pace_next) + math.ceil(
                    seg.nbytes * 8e9 / rate)

    def _on_read_response(self, qp: QueuePair, pkt: Packet, hdr: RoceHeader,
                          now: SimTime) -> None:
        if qp.state is QpState.ERROR:
            self.node.world.count("roce_discarded_on_error", 1)
            return
        if not self._in_sequence(qp, pkt, now, ack_dup=False):
            return
        wrst = qp.wr_states.get(hdr.wr_id)
        if wrst is None or wrst.done:
            return
        if pkt.payload is not None:
            self.node.addr_space.write(wrst.wr.local_addr + hdr.offset, pkt.payload)
        self.node.tlb_stall_ns += self.node.addr_space.access_latency(
            wrst.wr.local_addr + hdr.offset, pkt.payload_len, now)
        qp.delivered_payload_bytes += pkt.payload_len
        self.node.deliver_payload(qp, pkt)
        wrst.remaining -= pkt.payload_len
        if wrst.remaining == 0:
            wrst.done = True
            qp.completion_counter += 1
            self.node.world.on_wr_complete(self.node.node_id, qp, hdr.wr_id)

    def _on_ack(self, qp: QueuePair, hdr: RoceHeader, now: SimTime) -> None:
        retired = 0
        newest_sent = None
        completed: List[int] = []
        while qp.outstanding and qp.outstanding[0].psn <= hdr.ack_psn:
            seg = qp.outstanding.popleft()
            retired += seg.nbytes
            newest_sent = seg.sent_at
            qp.in_flight_bytes -= seg.nbytes
            wrst = qp.wr_states[seg.wr_id]
            wrst.remaining -= seg.nbytes
            if seg.last and wrst.remaining == 0:
                wrst.done = True
                completed.append(seg.wr_id)
        if hdr.error:
            qp.state = QpState.ERROR
            qp.error_completions += 1
        if retired:
            rtt = now - newest_sent if newest_sent is not None else 0
            self._feed_cc(qp, cc.Ack(retired, rtt))
        for wr_id in completed:
            qp.completion_counter += 1
            self.node.world.on_wr_complete(self.node.node_id, qp, wr_id)
        if qp.state is QpState.READY:
            self.try_send(qp)

    def _emit_ack(self, qp: QueuePair, now: SimTime, error: bool = False) -> None:
        qp.ack_run = 0
        hdr = RoceHeader("ack", qp.peer_qpn, qp.qpn, ack_psn=qp.expect_psn - 1,
                         error=error)
        self.node.egress.enqueue(self._control_packet(qp, hdr, qp.expect_psn - 1), None)

    def _maybe_cnp(self, qp: QueuePair, now: SimTime) -> None:
        if now - qp.last_cnp_at < self.config.cnp_interval_ns:
            return
        qp.last_cnp_at = now
        hdr = RoceHeader("cnp", qp.peer_qpn, qp.qpn)
        self.node.egress.enqueue(self._control_packet(qp, hdr, 0), None)
        self.node.world.count("cnps_sent", 1)

    # -- completion polling ----------------------------------------------

    def poll_completion(self, qpn: int) -> CompletionInfo:
        """Completions since the previous poll plus the QP error flag."""
        qp = self.qps.get(qpn)
        if qp is None:
            raise ConfigError(f"unknown QP {qpn}")
        delta = qp.completion_counter - qp._polled
        qp._polled = qp.completion_counter
        return CompletionInfo(delta, qp.state is QpState.ERROR)
