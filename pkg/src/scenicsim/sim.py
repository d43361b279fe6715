"""The simulated world: nodes, the switch, flow drivers, metric sampling,
and the dispatch of every event kind.

A world is built from a Scenario and runs to a horizon.  All state is
owned by the single-threaded event loop; independent runs share nothing,
so scenario sweeps can execute in parallel processes.  Identical scenario
plus seed yields identical metrics, counters, and trace, byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from . import congestion as ccmod
from .core import ConfigError, HeaderKind, OtherFlow, Packet, SimTime
from .engine import (AgentTimer, CcLoad, CcSwap, CcTimer, CsrApply,
                     DownlinkEnqueue, DriverPoll, EventLoop, FlowStart,
                     IrqTimeout, PacketArrival, PortFree, PostMore, QpPace,
                     RetransmitCheck, SampleMetrics, ScuEmit, ScuOnline)
from .hostpath import IrqCoalescer, Ring
from .memory import AddressSpace, Tlb
from .metrics import MetricsCollector, MetricsSeries
from .network import Downlink, NicEgress
from .scenario import FlowDecl, Scenario, ScuDecl
from .scu import (CAP_NONE, REG_CAP_BASE, ChunkMeta, ControlPlaneAgent,
                  PLUGIN_KINDS, Passthrough, ScuDescriptor, ScuState, Sink,
                  SinkKind, scu_process)
from .transport import Opcode, RoceEngine, TransportConfig, WorkRequest
from .triage import Route, SteeringTable, classify, steer

SCU_RECONFIG_DELAY_NS = 8_000_000


def _build_plugin(kind: str, args: Dict[str, int]):
    cls = PLUGIN_KINDS[kind]
    if kind == "hashpart":
        return cls(num_dests=args.get("dests", 4),
                   row_width_bytes=args.get("row_width", 16),
                   key_cols=args.get("key_cols", 1))
    if kind == "rate_limiter" and "burst" in args:
        return cls(burst_bytes=args["burst"])
    return cls()


def _sinks_for(kind: str, args: Dict[str, int]) -> List[Sink]:
    if kind == "hashpart":
        return [Sink(SinkKind.GPU_MEM, f"gpu{i}")
                for i in range(args.get("dests", 4))]
    return [Sink(SinkKind.HOST_MEM)]


class Node:
    def __init__(self, world: "World", node_id: int, name: str, subnet: int,
                 link_spec, transport_cfg: TransportConfig, ring_cfg, irq_cfg,
                 materialize: bool):
        self.world = world
        self.node_id = node_id
        self.name = name
        self.subnet = subnet
        self.roce_enabled = True
        self.tcp_enabled = False
        self.addr_space = AddressSpace(
            Tlb(capacity=world.scenario.transport.tlb_capacity,
                page_size=world.scenario.transport.tlb_page_bytes,
                miss_latency_ns=world.scenario.transport.tlb_miss_ns),
            materialize=materialize)
        self.steering = SteeringTable()
        self.engine = RoceEngine(self, transport_cfg)
        self.egress = NicEgress(node_id, link_spec)
        self.egress.world = world
        self.scus: Dict[int, ScuDescriptor] = {}
        self.default_sink = Sink(SinkKind.HOST_MEM, "default")
        self.ring = Ring(ring_cfg.capacity_bytes, ring_cfg.dma_mode)
        self.poll_budget = ring_cfg.poll_budget
        self.coalescer = IrqCoalescer(irq_cfg)
        self.irq_timeout_at: Optional[SimTime] = None
        self.tlb_stall_ns = 0
        self.record_scu_egress = False

    def add_scu(self, decl: ScuDecl) -> ScuDescriptor:
        plugin = _build_plugin(decl.kind, decl.args)
        desc = ScuDescriptor(decl.index, plugin, _sinks_for(decl.kind, decl.args))
        self.scus[decl.index] = desc
        return desc

    # -- RX delivery ------------------------------------------------------

    def deliver_payload(self, qp, pkt: Packet) -> None:
        """Extracted fast-path payload: account it and steer it to an SCU."""
        if qp.flow_index >= 0:
            self.world.metrics.add_flow_bytes(qp.flow_index, pkt.payload_len)
        else:
            watcher = self.world.delivery_watchers.get((self.node_id, qp.qpn))
            if watcher is not None:
                watcher(pkt.payload_len, self.world.loop.now)
        self.world.payload_delivered_bytes += pkt.payload_len
        version, idx = qp.steer_cache
        if version != self.steering.version:
            idx = steer(qp.flow_key, self.steering)
            qp.steer_cache = (self.steering.version, idx)
        meta = ChunkMeta(pkt.flow, pkt.src_node, pkt.src_subnet,
                         self.world.loop.now)
        self.deliver_to_scu(idx, pkt.payload_len, pkt.payload, meta)

    def deliver_to_scu(self, idx: Optional[int], nbytes: int,
                       payload: Optional[bytes], meta: ChunkMeta) -> None:
        world = self.world
        if idx is None:
            world.count("steer_nomapping", 1)
            self.default_sink.deliver(nbytes, payload, meta.now)
            return
        desc = self.scus.get(idx)
        if desc is None or desc.state is not ScuState.READY:
            world.count("scu_unrouted", 1)
            self.default_sink.deliver(nbytes, payload, meta.now)
            return
        if type(desc.plugin) is Passthrough and desc.io_trace is None:
            # Equivalent to scu_process + Emit(0, ...) without the dispatch.
            desc.in_chunks += 1
            desc.in_bytes += nbytes
            desc.out_bytes += nbytes
            sink = desc.sinks[0]
            sink.deliver(nbytes, payload, meta.now)
            if self.record_scu_egress:
                world.scu_egress.append((meta.now, desc.index, meta.src_subnet, nbytes))
            return
        emits = scu_process(desc, nbytes, payload, meta)
        if emits is None:
            world.count("scu_faults", 1)
            self.default_sink.deliver(nbytes, payload, meta.now)
            return
        self._handle_emits(desc, emits, meta.src_subnet, meta.now)

    def _handle_emits(self, desc: ScuDescriptor, emits, subnet: int,
                      now: SimTime) -> None:
        for em in emits:
            if em.at is None or em.at <= now:
                desc.sinks[em.sink_index].deliver(em.nbytes, em.payload, now)
                if self.record_scu_egress:
                    self.world.scu_egress.append((now, desc.index, subnet, em.nbytes))
            else:
                self.world.schedule(em.at, ScuEmit(
                    self.node_id, desc.index, em.sink_index, em.nbytes,
                    subnet, em.payload))

    def slow_path_rx(self, pkt: Packet) -> None:
        world = self.world
        payload = pkt.payload if pkt.payload is not None else bytes(pkt.payload_len)
        if self.ring.rx_enqueue(payload):
            if self.coalescer.on_packet(world.loop.now):
                world.schedule(world.loop.now, DriverPoll(self.node_id))
        else:
            world.count("ring_drops", 1)
        world.sched_irq_timeout(self)

    def tcp_rx(self, pkt: Packet) -> None:
        meta = ChunkMeta(pkt.flow, pkt.src_node, pkt.src_subnet, self.world.loop.now)
        self.deliver_to_scu(steer(pkt.flow, self.steering), pkt.payload_len,
                            pkt.payload, meta)


@dataclass
class FlowRuntime:
    index: int
    decl: FlowDecl
    src_id: int
    dst_id: int
    qpn_src: int = -1
    qpn_dst: int = -1
    posted: int = 0
    completed: int = 0
    outstanding: int = 0
    next_wr_id: int = 1
    local_base: int = 0
    remote_base: int = 0
    started: bool = False


class World:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.loop = EventLoop()
        self.schedule = self.loop.schedule  # hot-path alias
        self.metrics = MetricsCollector(scenario.sample_period_ns)
        self.counters: Dict[str, int] = {
            "drops": 0, "irqs": 0, "dma_txs": 0, "completions": 0,
        }
        self.seedseq = np.random.SeedSequence(scenario.seed)
        self.rng = np.random.default_rng(self.seedseq)
        self._packet_ids = 0
        self.injected_wire_bytes = 0
        self.delivered_wire_bytes = 0
        self.dropped_wire_bytes = 0
        self.payload_delivered_bytes = 0
        self.scu_egress: List[tuple] = []
        self.wr_complete_hook: Optional[Callable] = None
        self.delivery_watchers: Dict[tuple, Callable] = {}
        self.agents: Dict[int, ControlPlaneAgent] = {}
        self._applied_caps: Dict[tuple, set] = {}

        names = scenario.node_names()
        self._name_to_id = {n: i for i, n in enumerate(names)}
        tcfg = TransportConfig(
            mtu_payload=scenario.transport.mtu_payload,
            header_bytes=scenario.transport.header_bytes,
            ack_every=scenario.transport.ack_every,
            cnp_interval_ns=scenario.transport.cnp_interval_ns,
            rto_ns=scenario.transport.rto_ns,
            symmetric_read_gating=scenario.transport.symmetric_read_gating,
            lossless=all(l.lossless for l in scenario.links.values()),
        )
        self.transport_cfg = tcfg
        self.nodes: List[Node] = []
        self.downlinks: List[Downlink] = []
        for i, decl in enumerate(scenario.nodes):
            spec = scenario.links[decl.name]
            node = Node(self, i, decl.name, decl.subnet, spec, tcfg,
                        scenario.ring, scenario.irq,
                        materialize=not scenario.synthetic_payload)
            self.nodes.append(node)
            self.downlinks.append(Downlink(i, spec))
        for decl in scenario.scus:
            self.nodes[self._name_to_id[decl.node]].add_scu(decl)

        self.flows: List[FlowRuntime] = [
            FlowRuntime(i, d, self._name_to_id[d.src], self._name_to_id[d.dst])
            for i, d in enumerate(scenario.flows)
        ]

        if scenario.firewall is not None:
            fw = scenario.firewall
            nid = self._name_to_id[fw.node]
            self.nodes[nid].record_scu_egress = True
            self.agents[nid] = ControlPlaneAgent(
                fw.threshold_gbps * 1e9, fw.timer_period_ns)

        self._dispatch = {
            PacketArrival: self._on_arrival,
            PortFree: self._on_port_free,
            DownlinkEnqueue: self._on_downlink_enqueue,
            QpPace: self._on_qp_pace,
            CcTimer: self._on_cc_timer,
            CcLoad: self._on_cc_load,
            CcSwap: self._on_cc_swap,
            RetransmitCheck: self._on_retx,
            AgentTimer: self._on_agent_timer,
            CsrApply: self._on_csr_apply,
            ScuEmit: self._on_scu_emit,
            ScuOnline: self._on_scu_online,
            IrqTimeout: self._on_irq_timeout,
            DriverPoll: self._on_driver_poll,
            FlowStart: self._on_flow_start,
            PostMore: self._on_post_more,
            SampleMetrics: self._on_sample,
        }

    # -- identity and small services --------------------------------------

    def node_id(self, name: str) -> int:
        return self._name_to_id[name]

    def node(self, name: str) -> Node:
        return self.nodes[self._name_to_id[name]]

    def new_packet_id(self) -> int:
        self._packet_ids += 1
        return self._packet_ids

    def schedule(self, at: SimTime, action) -> None:
        # Shadowed by a bound-method alias in __init__; kept for subclasses.
        self.loop.schedule(at, action)

    def count(self, name: str, n: int) -> None:
        self.counters[name] = self.counters.get(name, 0) + n

    def line_rate_bps(self, node: Node) -> float:
        return node.egress.spec.gbps * 1e9

    # -- congestion control wiring ----------------------------------------

    def _window_auto_bytes(self, node: Node) -> int:
        spec = node.egress.spec
        seg_wire = self.transport_cfg.mtu_payload + self.transport_cfg.header_bytes
        ser = seg_wire * 8 / spec.gbps
        rtt = 4 * spec.prop_delay_ns + 4 * ser
        bdp = spec.gbps * rtt / 8  # bytes
        segs = max(2, math.ceil(bdp / self.transport_cfg.mtu_payload))
        return segs * self.transport_cfg.mtu_payload

    def make_cc(self, kind: str, node: Node, now: SimTime):
        if kind == "window":
            w = self.scenario.cc.window_bytes or self._window_auto_bytes(node)
            return ccmod.WindowCc(w)
        if kind == "dcqcn":
            overrides = dict(self.scenario.cc.dcqcn)
            if "fast_recovery_steps" in overrides:
                overrides["fast_recovery_steps"] = int(overrides["fast_recovery_steps"])
            params = ccmod.DcqcnParams(
                line_rate_bps=self.line_rate_bps(node), **overrides)
            return ccmod.DcqcnCc(params, now)
        raise ConfigError(f"unknown cc algorithm {kind!r}")

    def new_cc_slot(self, node: Optional[Node] = None) -> ccmod.DualSlot:
        node = node if node is not None else self.nodes[0]
        active = self.make_cc(self.scenario.cc.algorithm, node, self.loop.now)
        return ccmod.DualSlot(active, self.scenario.cc.reconfig_delay_ns)

    # -- run ----------------------------------------------------------------

    def prime(self) -> None:
        """Schedule everything the scenario defines."""
        sc = self.scenario
        for fl in self.flows:
            self.schedule(fl.decl.start_ns, FlowStart(fl.index))
        period = sc.sample_period_ns
        t = period
        while t <= sc.duration_ns:
            self.schedule(t, SampleMetrics(t))
            t += period
        if sc.cc.swap_to:
            load_at = sc.cc.load_at_ns
            if load_at < 0:
                load_at = max(0, sc.cc.swap_at_ns - 2 * sc.cc.reconfig_delay_ns)
            self.schedule(load_at, CcLoad(sc.cc.swap_to))
            self.schedule(sc.cc.swap_at_ns, CcSwap())
        for nid, agent in self.agents.items():
            self.schedule(agent.timer_period_ns, AgentTimer(nid))

    def run_until(self, t_end: SimTime) -> MetricsSeries:
        self.loop.run_until(t_end, self._dispatch)
        return self.metrics.series

    def run(self) -> MetricsSeries:
        self.prime()
        self.run_until(self.scenario.duration_ns)
        self.drain_scus()
        self.finalize_counters()
        return self.metrics.series

    def drain_scus(self) -> None:
        """End of stream: flush what the units still buffer (final flushes)."""
        now = self.loop.now
        for node in self.nodes:
            for desc in node.scus.values():
                if desc.state is not ScuState.READY:
                    continue
                emits = desc.plugin.drain(now)
                for em in emits:
                    desc.out_bytes += em.nbytes
                    desc.sinks[em.sink_index].deliver(em.nbytes, em.payload, now)
                    if node.record_scu_egress:
                        self.scu_egress.append((now, desc.index, 0, em.nbytes))

    def run_while(self, keep_going: Callable[[], bool], t_max: SimTime) -> None:
        self.loop.run_while(self._dispatch, keep_going, t_max)

    def finalize_counters(self) -> None:
        c = self.counters
        c["dma_txs"] = sum(n.ring.dma_tx_count for n in self.nodes)
        c["irqs"] = sum(n.coalescer.irqs_fired for n in self.nodes)
        c["slowpath_delivered"] = sum(n.ring.delivered for n in self.nodes)
        c["ring_drops"] = sum(n.ring.dropped for n in self.nodes)
        c["tlb_hits"] = sum(n.addr_space.tlb.hits for n in self.nodes)
        c["tlb_misses"] = sum(n.addr_space.tlb.misses for n in self.nodes)
        c["injected_bytes"] = self.injected_wire_bytes
        c["delivered_bytes"] = self.delivered_wire_bytes
        c["dropped_bytes"] = self.dropped_wire_bytes
        c["inflight_bytes_end"] = (self.injected_wire_bytes
                                   - self.delivered_wire_bytes
                                   - self.dropped_wire_bytes)
        c["payload_delivered_bytes"] = self.payload_delivered_bytes
        sizes = {f.decl.size_bytes for f in self.flows if f.decl.opcode != "raw"}
        if len(sizes) == 1:
            c["message_size_bytes"] = sizes.pop()
        self.metrics.series.counters = dict(c)

    def pending_wire_bytes(self) -> int:
        """Exact bytes still inside the network: queues, serializers, wires."""
        total = sum(n.egress.queued_bytes for n in self.nodes)
        total += sum(d.occupancy_bytes for d in self.downlinks)
        for action in self.loop.iter_pending_actions():
            if isinstance(action, (PortFree, DownlinkEnqueue, PacketArrival)):
                total += action.pkt.wire_bytes
        return total

    # -- control api ---------------------------------------------------------

    def set_csr(self, node: Node, scu_index: int, reg: int, value: int) -> None:
        desc = node.scus[scu_index]
        desc.csrs[reg] = value
        emits = desc.plugin.on_csr_write(reg, value, self.loop.now)
        subnet = reg - REG_CAP_BASE if reg >= REG_CAP_BASE else 0
        node._handle_emits(desc, emits, subnet, self.loop.now)

    def get_csr(self, node: Node, scu_index: int, reg: int) -> int:
        return node.scus[scu_index].csrs.get(reg, 0)

    def reconfigure(self, node: Node, scu_index: int, kind: str,
                    args: Optional[Dict[str, int]] = None) -> SimTime:
        """Swap an SCU's function; the unit is offline while loading."""
        if kind not in PLUGIN_KINDS:
            raise ConfigError(f"unknown scu kind {kind!r}")
        desc = node.scus[scu_index]
        desc.state = ScuState.RECONFIGURING
        desc.offline_until = self.loop.now + SCU_RECONFIG_DELAY_NS
        self.schedule(desc.offline_until, ScuOnline(node.node_id, scu_index, kind))
        return desc.offline_until

    # -- event handlers --------------------------------------------------------

    def _on_arrival(self, a: PacketArrival) -> None:
        pkt = a.pkt
        self.delivered_wire_bytes += pkt.wire_bytes
        node = self.nodes[a.node]
        if pkt.kind is HeaderKind.ROCE_BTH and node.roce_enabled:
            node.engine.on_rx(pkt)
            return
        route = classify(pkt, node.roce_enabled, node.tcp_enabled)
        if route is Route.SLOW_PATH:
            node.slow_path_rx(pkt)
        else:
            node.tcp_rx(pkt)

    def _on_port_free(self, a: PortFree) -> None:
        a.port.on_free(a.pkt, self)

    def _on_downlink_enqueue(self, a: DownlinkEnqueue) -> None:
        self.downlinks[a.dst].link_transmit(a.pkt, self)

    def _on_qp_pace(self, a: QpPace) -> None:
        self.nodes[a.node].engine.on_pace(a.qpn)

    def _on_cc_timer(self, a: CcTimer) -> None:
        self.nodes[a.node].engine.on_cc_timer(a.qpn)

    def _on_cc_load(self, a: CcLoad) -> None:
        now = self.loop.now
        for node in self.nodes:
            factory = (lambda nd: lambda at: self.make_cc(a.algo, nd, at))(node)
            for qp in node.engine.qps.values():
                qp.cc.load_shadow(factory, now)
                node.engine._arm_cc_timer(qp)
        self.count("cc_loads", 1)

    def _on_cc_swap(self, a: CcSwap) -> None:
        now = self.loop.now
        for node in self.nodes:
            for qp in node.engine.qps.values():
                if a.qpn >= 0 and (node.node_id != a.node or qp.qpn != a.qpn):
                    continue
                if qp.cc.swap_active(now):
                    self.count("cc_swaps", 1)
                    node.engine._arm_cc_timer(qp)
                    node.engine.try_send(qp)
                elif qp.cc.shadow_ready_at is not None:
                    self.schedule(qp.cc.shadow_ready_at,
                                  CcSwap(node.node_id, qp.qpn))

    def _on_retx(self, a: RetransmitCheck) -> None:
        self.nodes[a.node].engine.on_retransmit_check(a.qpn)

    def _on_agent_timer(self, a: AgentTimer) -> None:
        node = self.nodes[a.node]
        agent = self.agents[a.node]
        fw = self.scenario.firewall
        desc = node.scus.get(fw.scu_index)
        if desc is not None and hasattr(desc.plugin, "stats"):
            snap = desc.plugin.stats.snapshot()
            wake = agent.policy_step(snap, self.loop.now)
            self.schedule(wake.effective_at,
                          CsrApply(a.node, fw.scu_index, wake.table))
        nxt = self.loop.now + agent.timer_period_ns
        if nxt <= self.scenario.duration_ns:
            self.schedule(nxt, AgentTimer(a.node))

    def _on_csr_apply(self, a: CsrApply) -> None:
        node = self.nodes[a.node]
        key = (a.node, a.scu_index)
        applied = self._applied_caps.setdefault(key, set())
        for subnet, cap in sorted(a.table.items()):
            self.set_csr(node, a.scu_index, REG_CAP_BASE + subnet, int(cap))
        for stale in sorted(applied - set(a.table)):
            self.set_csr(node, a.scu_index, REG_CAP_BASE + stale, CAP_NONE)
        self._applied_caps[key] = set(a.table)
        self.count("cap_updates", 1)

    def _on_scu_emit(self, a: ScuEmit) -> None:
        node = self.nodes[a.node]
        desc = node.scus[a.scu_index]
        desc.sinks[a.sink_index].deliver(a.nbytes, a.payload, self.loop.now)
        if node.record_scu_egress:
            self.scu_egress.append((self.loop.now, a.scu_index, a.subnet, a.nbytes))

    def _on_scu_online(self, a: ScuOnline) -> None:
        node = self.nodes[a.node]
        desc = node.scus[a.scu_index]
        decl = ScuDecl(node.name, a.scu_index, a.kind, {})
        fresh = node.add_scu(decl)
        fresh.csrs = {}
        self.count("scu_reconfigs", 1)

    def _on_irq_timeout(self, a: IrqTimeout) -> None:
        node = self.nodes[a.node]
        node.irq_timeout_at = None
        if node.coalescer.on_timeout(self.loop.now):
            self.schedule(self.loop.now, DriverPoll(a.node))
        self.sched_irq_timeout(node)

    def sched_irq_timeout(self, node: Node) -> None:
        due = node.coalescer.timeout_due()
        if due is None or node.irq_timeout_at == due:
            return
        node.irq_timeout_at = due
        self.schedule(max(due, self.loop.now), IrqTimeout(node.node_id))

    def _on_driver_poll(self, a: DriverPoll) -> None:
        node = self.nodes[a.node]
        payloads = node.ring.driver_poll(node.poll_budget)
        for payload in payloads:
            node.default_sink.deliver(len(payload), payload, self.loop.now)
        if node.coalescer.on_poll_complete(self.loop.now, len(payloads)):
            self.schedule(self.loop.now, DriverPoll(a.node))
        self.sched_irq_timeout(node)

    # -- flow drivers ------------------------------------------------------------

    def _on_flow_start(self, a: FlowStart) -> None:
        fl = self.flows[a.flow_index]
        fl.started = True
        self.metrics.flow_started(fl.index)
        decl = fl.decl
        if decl.opcode == "raw":
            self.schedule(self.loop.now, PostMore(fl.index))
            return
        src = self.nodes[fl.src_id]
        dst = self.nodes[fl.dst_id]
        fl.qpn_src = src.engine.create_qp(fl.dst_id, decl.scu_index, fl.index)
        fl.qpn_dst = dst.engine.create_qp(fl.src_id, decl.scu_index, fl.index)
        src.engine.pair(fl.qpn_src, fl.qpn_dst)
        dst.engine.pair(fl.qpn_dst, fl.qpn_src)
        fl.local_base = (fl.index + 1) << 30
        fl.remote_base = (fl.index + 1) << 30
        src.engine.register_mr(fl.local_base, decl.size_bytes)
        dst.engine.register_mr(fl.remote_base, decl.size_bytes)
        if decl.payload == "random" and dst.addr_space.materialize:
            data = self.rng.bytes(decl.size_bytes)
            if decl.opcode == "read":
                dst.addr_space.write(fl.remote_base, data)
            else:
                src.addr_space.write(fl.local_base, data)
        if decl.gap_ns > 0:
            self._post_wr(fl)
            nxt = self.loop.now + decl.gap_ns
            if self._flow_may_post(fl, nxt):
                self.schedule(nxt, PostMore(fl.index))
        else:
            while fl.outstanding < decl.depth and self._flow_may_post(fl, self.loop.now):
                self._post_wr(fl)

    def _flow_may_post(self, fl: FlowRuntime, at: SimTime) -> bool:
        if fl.decl.count and fl.posted >= fl.decl.count:
            return False
        return not self.scenario.duration_ns or at < self.scenario.duration_ns

    def _post_wr(self, fl: FlowRuntime) -> None:
        decl = fl.decl
        opcode = Opcode.WRITE if decl.opcode == "write" else Opcode.READ
        wr = WorkRequest(fl.next_wr_id, opcode, fl.local_base, fl.remote_base,
                         decl.size_bytes)
        fl.next_wr_id += 1
        src = self.nodes[fl.src_id]
        src.engine.post_work(fl.qpn_src, wr)
        fl.posted += 1
        fl.outstanding += 1

    def _on_post_more(self, a: PostMore) -> None:
        fl = self.flows[a.flow_index]
        decl = fl.decl
        if decl.opcode == "raw":
            self._post_raw(fl)
            nxt = self.loop.now + max(1, decl.gap_ns)
            if self._flow_may_post(fl, nxt):
                self.schedule(nxt, PostMore(fl.index))
            return
        if self._flow_may_post(fl, self.loop.now):
            self._post_wr(fl)
            nxt = self.loop.now + decl.gap_ns
            if decl.gap_ns > 0 and self._flow_may_post(fl, nxt):
                self.schedule(nxt, PostMore(fl.index))

    def _post_raw(self, fl: FlowRuntime) -> None:
        decl = fl.decl
        src = self.nodes[fl.src_id]
        payload = None if not src.addr_space.materialize else bytes(decl.size_bytes)
        pkt = Packet(
            id=self.new_packet_id(), flow=OtherFlow(f"flow{fl.index}"),
            kind=HeaderKind.OTHER,
            wire_bytes=decl.size_bytes + self.transport_cfg.header_bytes,
            payload_len=decl.size_bytes, payload=payload,
            src_node=fl.src_id, dst_node=fl.dst_id, src_subnet=src.subnet)
        src.egress.enqueue(pkt, None)
        fl.posted += 1
        self.metrics.add_flow_bytes(fl.index, decl.size_bytes)

    def on_wr_complete(self, node_id: int, qp, wr_id: int) -> None:
        self.count("completions", 1)
        if qp.flow_index < 0:
            if self.wr_complete_hook is not None:
                self.wr_complete_hook(node_id, qp, wr_id)
            return
        fl = self.flows[qp.flow_index]
        if node_id != fl.src_id:
            return
        fl.completed += 1
        fl.outstanding -= 1
        if fl.decl.gap_ns:
            return
        while fl.outstanding < fl.decl.depth and self._flow_may_post(fl, self.loop.now):
            self._post_wr(fl)

    def _on_sample(self, a: SampleMetrics) -> None:
        self.metrics.sample(a.at)
