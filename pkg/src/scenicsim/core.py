"""Shared time, byte, packet and link-rate primitives.

Everything downstream (triage, transport, congestion control, the event
loop) builds on the types in this module.  Simulated time is integer
nanoseconds; link-rate arithmetic that produces fractional nanoseconds is
kept exact by the network layer (see ``network.PortTimer``), while the
helper functions here use plain double arithmetic, which is sufficient for
their callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

# Integer nanoseconds since simulation start.
SimTime = int

# Default RoCE wire sizing: an MTU-sized segment totals 4178 bytes on the
# wire.  Only the total is fixed; the payload/framing split is configurable
# and defaults to 4096 payload + 82 bytes of framing.
DEFAULT_WIRE_MTU = 4178
DEFAULT_HEADER_BYTES = 82
DEFAULT_SEGMENT_PAYLOAD = DEFAULT_WIRE_MTU - DEFAULT_HEADER_BYTES

GBPS = 1_000_000_000  # bits per second in one Gbit/s


class ConfigError(Exception):
    """Invalid scenario or component configuration."""


class ProtocolError(Exception):
    """A wire or ring protocol contract was broken."""


class InvariantViolation(Exception):
    """An internal simulator invariant failed; the run is not trustworthy."""


class AccessFault(Exception):
    """Access to an unregistered virtual address."""


class HeaderKind(Enum):
    ROCE_BTH = "roce"
    TCP_SEG = "tcp"
    OTHER = "other"


@dataclass(frozen=True)
class RoceFlow:
    qpn: int


@dataclass(frozen=True)
class TcpFlow:
    session: int


@dataclass(frozen=True)
class OtherFlow:
    reason: str = "unclassified"


# Flow identity is structural: Roce(3) and Tcp(3) are distinct keys.
FlowKey = Union[RoceFlow, TcpFlow, OtherFlow]


@dataclass(slots=True)
class Packet:
    """One unit of simulated wire traffic.

    ``payload`` may be None for synthetic traffic where only byte counts
    matter; ``payload_len`` is authoritative either way.  ``ecn_marked`` is
    set exclusively by switch queues.  ``psn`` is present iff the packet is
    a RoCE segment.
    """

    id: int
    flow: FlowKey
    kind: HeaderKind
    wire_bytes: int
    payload_len: int = 0
    payload: Optional[bytes] = None
    ecn_marked: bool = False
    psn: Optional[int] = None
    src_node: int = 0
    dst_node: int = 0
    src_subnet: int = 0
    # Transport-level header fields (opcode, addresses, ack state).  Headers
    # are modeled by kind + size, not encoded bytes; see transport.RoceHeader.
    meta: object = None

    def __post_init__(self):
        if self.payload is not None and self.payload_len != len(self.payload):
            self.payload_len = len(self.payload)
        if self.wire_bytes < self.payload_len:
            raise ConfigError(
                f"wire_bytes {self.wire_bytes} smaller than payload {self.payload_len}"
            )
        if (self.psn is not None) != (self.kind is HeaderKind.ROCE_BTH):
            raise ConfigError("psn is carried by RoCE segments and only by them")


@dataclass
class LinkSpec:
    """Static properties of one link attachment."""

    gbps: float = 100.0
    prop_delay_ns: int = 500
    mtu_bytes: int = DEFAULT_WIRE_MTU
    queue_cap_bytes: int = 2 * 1024 * 1024
    ecn_threshold_bytes: int = 200 * 1024
    lossless: bool = True

    def __post_init__(self):
        if self.gbps <= 0:
            raise ConfigError("link rate must be positive")
        if self.ecn_threshold_bytes > self.queue_cap_bytes:
            raise ConfigError("ECN threshold cannot exceed queue capacity")


def per_packet_budget_ns(wire_bytes: int, gbps: float) -> float:
    """Per-packet processing budget at a given line rate, in nanoseconds.

    With the rate expressed in Gbit/s (= bits per nanosecond) the budget is
    wire_bytes * 8 / gbps.  Double arithmetic; callers that need exactness
    track rational remainders themselves.
    """
    if gbps <= 0:
        raise ValueError("line rate must be positive")
    if wire_bytes < 0:
        raise ValueError("wire_bytes must be non-negative")
    return wire_bytes * 8 / gbps


def cycles_within_budget(budget_ns: float, clock_mhz: float) -> int:
    """Whole clock cycles that fit into a time budget at ``clock_mhz``."""
    if budget_ns <= 0 or clock_mhz <= 0:
        raise ValueError("budget and clock rate must be positive")
    return math.floor(budget_ns * clock_mhz / 1000)


def serialization_delay_ns(wire_bytes: int, link: LinkSpec) -> float:
    """Time to clock ``wire_bytes`` onto ``link``.

    Same arithmetic as per_packet_budget_ns; kept separate because the two
    answer different questions (processing headroom vs. wire occupancy).
    """
    if wire_bytes < 0:
        raise ValueError("wire_bytes must be non-negative")
    return wire_bytes * 8 / link.gbps
