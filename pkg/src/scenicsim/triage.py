"""RX triage: route packets to the RoCE fast path, TCP fast path or the
slow path, and steer extracted fast-path payloads to stream compute units.

Classification is a pure function of the header kind and the per-node
enable flags.  The slow path is always present, so the function is total:
anything the offloaded stacks cannot or may not handle falls through to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

from .core import ConfigError, FlowKey, HeaderKind, Packet


class Route(Enum):
    FAST_ROCE = "fast_roce"
    FAST_TCP = "fast_tcp"
    SLOW_PATH = "slow_path"


def classify(pkt: Packet, roce_enabled: bool = True, tcp_enabled: bool = True) -> Route:
    """Total routing decision for one received packet."""
    if pkt.kind is HeaderKind.ROCE_BTH and roce_enabled:
        return Route.FAST_ROCE
    if pkt.kind is HeaderKind.TCP_SEG and tcp_enabled:
        return Route.FAST_TCP
    return Route.SLOW_PATH


@dataclass
class SteeringTable:
    """Flow-to-SCU mapping for fast-path payloads.

    At most one entry per flow key; indices are bounded by the configured
    SCU count (16 at most).  Mutations happen only between event-loop steps
    and bump ``version`` so lookup caches can invalidate.
    """

    scu_count: int = 16
    entries: Dict[FlowKey, int] = field(default_factory=dict)
    version: int = 0

    def __post_init__(self):
        if not 0 < self.scu_count <= 16:
            raise ConfigError("SCU count must be in 1..16")

    def bind(self, flow: FlowKey, scu_index: int) -> None:
        if not 0 <= scu_index < self.scu_count:
            raise ConfigError(
                f"scu index {scu_index} out of range for {self.scu_count} SCUs"
            )
        self.entries[flow] = scu_index
        self.version += 1

    def unbind(self, flow: FlowKey) -> None:
        self.entries.pop(flow, None)
        self.version += 1


def steer(flow: FlowKey, table: SteeringTable) -> Optional[int]:
    """SCU index for a fast-path flow, or None when unmapped.

    Unmapped payloads are not dropped; the caller delivers them to the
    node's default host sink and counts them, so byte conservation holds.
    """
    return table.entries.get(flow)
