"""Stream compute units: plug-in framework, round-robin arbitration,
built-in units, and the off-datapath control-plane agent.

An SCU consumes extracted payload chunks for the flows steered to it and
emits byte ranges to its sinks.  Units are strictly isolated: each owns its
plugin state, a fault poisons only the faulting unit, and no unit can
observe another's traffic.  Egress bandwidth is shared by packet-based
round-robin arbitration across backlogged units.

The control-plane agent models policy logic running on management cores: a
periodic hardware timer wakes it, it reads traffic statistics over a
register bus at a fixed per-access cost, and pushes rate caps back into the
limiter unit.  The modeled reaction latency is the interrupt trip plus one
bus access per register read.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

from .core import ConfigError, SimTime, DEFAULT_WIRE_MTU
from .hashpart import HashPartitioner, FlushEvent

MAX_SCUS = 16

# Control/status register ids shared by the built-in units.
REG_NUM_DESTS = 0x10
REG_ROW_WIDTH = 0x11
REG_KEY_COLS = 0x12
REG_RATE_THRESHOLD_BPS = 0x20
REG_CAP_BASE = 0x100  # REG_CAP_BASE + subnet -> cap in bit/s (0 = hold all)
CAP_NONE = (1 << 64) - 1  # register value meaning "no cap"


class SinkKind(Enum):
    HOST_MEM = "host_mem"
    GPU_MEM = "gpu_mem"
    NET_TX = "net_tx"
    CONTROL_PLANE = "control_plane"


class Sink:
    """Byte-counting delivery endpoint with optional finite write bandwidth."""

    def __init__(self, kind: SinkKind, name: str = "", write_gbps: Optional[float] = None,
                 keep_data: bool = False):
        self.kind = kind
        self.name = name or kind.value
        self.write_gbps = write_gbps
        self.keep_data = keep_data
        self.bytes_received = 0
        self.chunks = 0
        self.data = bytearray() if keep_data else None
        self._busy_until = 0

    def deliver(self, nbytes: int, payload: Optional[bytes] = None, now: SimTime = 0) -> SimTime:
        """Accept ``nbytes``; returns the time the write completes."""
        self.bytes_received += nbytes
        self.chunks += 1
        if self.keep_data and payload is not None:
            self.data += payload
        if self.write_gbps is None:
            return now
        start = max(now, self._busy_until)
        self._busy_until = start + int(nbytes * 8 / self.write_gbps)
        return self._busy_until


class ScuState(Enum):
    READY = "ready"
    ERROR = "error"
    RECONFIGURING = "reconfiguring"


@dataclass(frozen=True)
class ChunkMeta:
    flow: object = None
    src_node: int = 0
    src_subnet: int = 0
    now: SimTime = 0


@dataclass(frozen=True)
class Emit:
    sink_index: int
    nbytes: int
    payload: Optional[bytes] = None
    at: Optional[SimTime] = None  # None = immediately


class ScuPlugin:
    """Base plug-in: pure with respect to its own state plus inputs."""

    kind = "user"

    def process(self, nbytes: int, payload: Optional[bytes], meta: ChunkMeta) -> List[Emit]:
        raise NotImplementedError

    def on_csr_write(self, reg: int, value: int, now: SimTime) -> List[Emit]:
        return []

    def drain(self, now: SimTime) -> List[Emit]:
        """Flush any internal buffers at end of stream."""
        return []


class Passthrough(ScuPlugin):
    kind = "passthrough"

    def process(self, nbytes, payload, meta):
        return [Emit(0, nbytes, payload)]


@dataclass
class SubnetCounters:
    packets: int = 0
    bytes: int = 0
    last_seen: SimTime = 0


class FlowStats:
    """Per-subnet traffic counters with consistent snapshots."""

    def __init__(self):
        self.per_subnet: Dict[int, SubnetCounters] = {}
        self.epoch = 0

    def update(self, subnet: int, nbytes: int, now: SimTime) -> None:
        c = self.per_subnet.get(subnet)
        if c is None:
            c = self.per_subnet[subnet] = SubnetCounters()
        c.packets += 1
        c.bytes += nbytes
        c.last_seen = now

    def snapshot(self) -> Dict[int, SubnetCounters]:
        self.epoch += 1
        return {s: SubnetCounters(c.packets, c.bytes, c.last_seen)
                for s, c in self.per_subnet.items()}


def monitor_update(stats: FlowStats, subnet: int, nbytes: int, now: SimTime) -> None:
    stats.update(subnet, nbytes, now)


class FlowMonitor(ScuPlugin):
    """Counting tap: updates per-subnet statistics, forwards unchanged."""

    kind = "flow_monitor"

    def __init__(self):
        self.stats = FlowStats()

    def process(self, nbytes, payload, meta):
        self.stats.update(meta.src_subnet, nbytes, meta.now)
        return [Emit(0, nbytes, payload)]


@dataclass
class Pass:
    pass


@dataclass
class Hold:
    until: Optional[SimTime]  # None = until a cap change releases it


class TokenBucket:
    """Token bucket in bytes: accrues at ``rate_bps``, burst-capped."""

    def __init__(self, rate_bps: float, burst_bytes: int):
        self.rate_bps = rate_bps
        self.burst = burst_bytes
        self.tokens = float(burst_bytes)
        self.last_refill: SimTime = 0

    def offer(self, nbytes: int, now: SimTime) -> SimTime:
        """Earliest conforming departure time for ``nbytes`` (>= now)."""
        if now > self.last_refill:
            accrued = (now - self.last_refill) * self.rate_bps / 8e9
            self.tokens = min(float(self.burst), self.tokens + accrued)
            self.last_refill = now
        if self.tokens >= nbytes:
            self.tokens -= nbytes
            return now
        deficit = nbytes - self.tokens
        wait = int(-(-deficit * 8e9 // self.rate_bps))  # ceil
        depart = self.last_refill + wait
        self.tokens = 0.0
        self.last_refill = depart
        return depart


class RateLimiter(ScuPlugin):
    """Per-subnet token-bucket shaper fed by the control-plane policy.

    Also keeps the flow statistics the agent reads, so monitor and limiter
    form one firewall pipeline on a single unit.
    """

    kind = "rate_limiter"

    def __init__(self, burst_bytes: int = DEFAULT_WIRE_MTU):
        self.stats = FlowStats()
        self.burst = burst_bytes
        self.caps_bps: Dict[int, Optional[float]] = {}  # None entry = hold all
        self.buckets: Dict[int, TokenBucket] = {}
        self.parked: Dict[int, List[Tuple[int, Optional[bytes]]]] = {}
        self.held = 0

    def decide(self, subnet: int, nbytes: int, now: SimTime):
        cap = self.caps_bps.get(subnet, "uncapped")
        if cap == "uncapped":
            return Pass()
        if cap is None or cap <= 0:
            return Hold(None)
        bucket = self.buckets.get(subnet)
        if bucket is None or bucket.rate_bps != cap:
            bucket = self.buckets[subnet] = TokenBucket(cap, self.burst)
            bucket.last_refill = now
        depart = bucket.offer(nbytes, now)
        return Pass() if depart <= now else Hold(depart)

    def process(self, nbytes, payload, meta):
        self.stats.update(meta.src_subnet, nbytes, meta.now)
        verdict = self.decide(meta.src_subnet, nbytes, meta.now)
        if isinstance(verdict, Pass):
            return [Emit(0, nbytes, payload)]
        self.held += 1
        if verdict.until is None:
            self.parked.setdefault(meta.src_subnet, []).append((nbytes, payload))
            return []
        return [Emit(0, nbytes, payload, at=verdict.until)]

    def on_csr_write(self, reg, value, now):
        if reg < REG_CAP_BASE:
            return []
        subnet = reg - REG_CAP_BASE
        new_cap = ("uncapped" if value == CAP_NONE
                   else float(value) if value > 0 else None)
        if self.caps_bps.get(subnet, "uncapped") == new_cap:
            return []  # unchanged policy keeps its bucket state
        if new_cap == "uncapped":
            self.caps_bps.pop(subnet, None)
            self.buckets.pop(subnet, None)
        else:
            self.caps_bps[subnet] = new_cap
            self.buckets.pop(subnet, None)
        # A lifted or raised cap releases parked chunks through the bucket.
        releases: List[Emit] = []
        cap = self.caps_bps.get(subnet, "uncapped")
        if cap is None:
            return releases
        for nbytes, payload in self.parked.pop(subnet, []):
            if cap == "uncapped":
                releases.append(Emit(0, nbytes, payload, at=now))
            else:
                verdict = self.decide(subnet, nbytes, now)
                at = now if isinstance(verdict, Pass) else verdict.until
                releases.append(Emit(0, nbytes, payload, at=at))
        return releases


class HashPartition(ScuPlugin):
    """Partitioning unit: rows in, bounded flushes out to per-destination
    sinks (sink index = destination index)."""

    kind = "hashpart"

    def __init__(self, num_dests: int, row_width_bytes: int, key_cols: int = 1,
                 **kwargs):
        self.part = HashPartitioner(num_dests, row_width_bytes, key_cols, **kwargs)

    def _emits(self, events: List[FlushEvent]) -> List[Emit]:
        return [Emit(ev.dest, len(ev.data), ev.data) for ev in events]

    def process(self, nbytes, payload, meta):
        if payload is None:
            raise ConfigError("hash partitioning needs materialized payload")
        return self._emits(self.part.ingest(payload))

    def drain(self, now):
        return self._emits(self.part.finish())


PLUGIN_KINDS = {
    "passthrough": Passthrough,
    "flow_monitor": FlowMonitor,
    "rate_limiter": RateLimiter,
    "hashpart": HashPartition,
}


@dataclass
class ScuDescriptor:
    index: int
    plugin: ScuPlugin
    sinks: List[Sink]
    csrs: Dict[int, int] = field(default_factory=dict)
    state: ScuState = ScuState.READY
    offline_until: SimTime = 0
    in_chunks: int = 0
    in_bytes: int = 0
    out_bytes: int = 0
    faults: int = 0
    io_trace: Optional[list] = None  # (dir, now, nbytes, detail) when enabled

    def __post_init__(self):
        if not 0 <= self.index < MAX_SCUS:
            raise ConfigError(f"SCU index {self.index} outside 0..{MAX_SCUS - 1}")
        if not self.sinks:
            raise ConfigError("an SCU needs at least one sink")

    @property
    def kind(self) -> str:
        return self.plugin.kind


def scu_process(scu: ScuDescriptor, nbytes: int, payload: Optional[bytes],
                meta: ChunkMeta) -> Optional[List[Emit]]:
    """Run one chunk through an SCU with fault isolation.

    A plugin fault moves only this SCU to the Error state and returns None:
    the chunk counts as unconsumed and the caller reroutes it to the
    default sink.  Other SCUs are unaffected.
    """
    if scu.state is not ScuState.READY:
        raise ConfigError(f"SCU {scu.index} is not ready ({scu.state.value})")
    scu.in_chunks += 1
    scu.in_bytes += nbytes
    if scu.io_trace is not None:
        scu.io_trace.append(("in", meta.now, nbytes, meta.flow))
    try:
        emits = scu.plugin.process(nbytes, payload, meta)
    except Exception:
        scu.state = ScuState.ERROR
        scu.faults += 1
        return None
    for em in emits:
        scu.out_bytes += em.nbytes
        if scu.io_trace is not None:
            scu.io_trace.append(("out", meta.now, em.nbytes, em.sink_index))
    return emits


class Arbiter:
    """Packet-based round-robin grant generator over backlogged SCUs."""

    def __init__(self, slots: int = MAX_SCUS, last_granted: Optional[int] = None):
        if slots < 1:
            raise ConfigError("arbiter needs at least one slot")
        self.slots = slots
        self.last_granted = slots - 1 if last_granted is None else last_granted
        self.grants: Dict[int, int] = {}

    def grant(self, participants: Set[int]) -> Optional[int]:
        """Next backlogged index in cyclic order after the previous grant,
        or None when nothing is backlogged."""
        if not participants:
            return None
        for off in range(1, self.slots + 1):
            idx = (self.last_granted + off) % self.slots
            if idx in participants:
                self.last_granted = idx
                self.grants[idx] = self.grants.get(idx, 0) + 1
                return idx
        return None


def arbiter_grant(arb: Arbiter, participants: Set[int]) -> Optional[int]:
    return arb.grant(participants)


@dataclass
class AgentWake:
    at: SimTime
    effective_at: SimTime
    reads: int
    table: Dict[int, float]


class ControlPlaneAgent:
    """Periodic incast policy: cap offending subnets when the aggregate
    arrival rate toward the protected node exceeds the threshold."""

    def __init__(self, threshold_bps: float, timer_period_ns: int = 1_000_000,
                 axi_access_ns: int = 300, irq_trip_ns: int = 200):
        if threshold_bps <= 0:
            raise ConfigError("policy threshold must be positive")
        self.threshold_bps = threshold_bps
        self.timer_period_ns = timer_period_ns
        self.axi_access_ns = axi_access_ns
        self.irq_trip_ns = irq_trip_ns
        self._prev: Dict[int, SubnetCounters] = {}
        self._prev_at: Optional[SimTime] = None
        self.wakes: List[AgentWake] = []

    def policy_step(self, snapshot: Dict[int, SubnetCounters], now: SimTime) -> AgentWake:
        """One timer wake: read the stats (2 registers per subnet), decide,
        and report when the resulting table becomes effective."""
        reads = 2 * len(snapshot)
        effective_at = now + self.irq_trip_ns + reads * self.axi_access_ns
        table: Dict[int, float] = {}
        if self._prev_at is not None and now > self._prev_at:
            window = now - self._prev_at
            deltas = {
                s: c.bytes - self._prev.get(s, SubnetCounters()).bytes
                for s, c in snapshot.items()
            }
            offenders = [s for s, d in deltas.items() if d > 0]
            aggregate_bps = sum(deltas.values()) * 8e9 / window
            if aggregate_bps > self.threshold_bps and offenders:
                cap = self.threshold_bps / len(offenders)
                table = {s: cap for s in offenders}
        self._prev = snapshot
        self._prev_at = now
        wake = AgentWake(now, effective_at, reads, table)
        self.wakes.append(wake)
        return wake
