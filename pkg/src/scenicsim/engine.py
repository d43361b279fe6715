"""Deterministic discrete-event core.

Events execute in (time, insertion sequence) order, which is total: two
events at the same nanosecond run in the order they were scheduled.  Event
actions are plain descriptor dataclasses, not closures, so a pending event
queue can be inspected and traces replayed.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Type

from .core import InvariantViolation, SimTime


# -- Action descriptors -------------------------------------------------

@dataclass(slots=True)
class PacketArrival:
    node: int
    pkt: object


@dataclass(slots=True)
class PortFree:
    """A serializer finished one packet; deliver it and start the next."""
    port: object
    pkt: object


@dataclass(slots=True)
class DownlinkEnqueue:
    """A packet reached the switch and joins its egress queue."""
    dst: int
    pkt: object


@dataclass(slots=True)
class QpPace:
    node: int
    qpn: int


@dataclass(slots=True)
class CcTimer:
    node: int
    qpn: int


@dataclass(slots=True)
class CcLoad:
    algo: str


@dataclass(slots=True)
class CcSwap:
    node: int = -1   # -1 = every QP whose shadow is ready
    qpn: int = -1


@dataclass(slots=True)
class RetransmitCheck:
    node: int
    qpn: int


@dataclass(slots=True)
class AgentTimer:
    node: int


@dataclass(slots=True)
class CsrApply:
    node: int
    scu_index: int
    table: dict


@dataclass(slots=True)
class ScuEmit:
    node: int
    scu_index: int
    sink_index: int
    nbytes: int
    subnet: int = 0
    payload: Optional[bytes] = None


@dataclass(slots=True)
class ScuOnline:
    node: int
    scu_index: int
    kind: str


@dataclass(slots=True)
class IrqTimeout:
    node: int


@dataclass(slots=True)
class DriverPoll:
    node: int


@dataclass(slots=True)
class FlowStart:
    flow_index: int


@dataclass(slots=True)
class PostMore:
    flow_index: int


@dataclass(slots=True)
class SampleMetrics:
    at: SimTime


Action = object


class EventLoop:
    """Binary-heap event queue keyed on (time, sequence)."""

    def __init__(self):
        self.now: SimTime = 0
        self._seq = 0
        self._heap: List[tuple] = []

    def schedule(self, at: SimTime, action: Action) -> None:
        if at < self.now:
            raise InvariantViolation(
                f"event {type(action).__name__} scheduled at {at} before now={self.now}")
        heapq.heappush(self._heap, (at, self._seq, action))
        self._seq += 1

    def pending(self) -> int:
        return len(self._heap)

    def peek_time(self) -> Optional[SimTime]:
        return self._heap[0][0] if self._heap else None

    def iter_pending_actions(self):
        for _, _, action in self._heap:
            yield action

    def run_until(self, t_end: SimTime, dispatch: Dict[Type, Callable]) -> None:
        """Execute every event with time <= t_end, then advance to t_end."""
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= t_end:
            at, _, action = pop(heap)
            self.now = at
            dispatch[type(action)](action)
        if t_end > self.now:
            self.now = t_end

    def run_while(self, dispatch: Dict[Type, Callable],
                  keep_going: Callable[[], bool],
                  t_max: SimTime) -> None:
        """Execute events until ``keep_going`` turns false, the queue runs
        dry, or ``t_max`` is reached.  Used by open-ended runs such as
        collectives that finish on a condition rather than a horizon."""
        heap = self._heap
        pop = heapq.heappop
        while heap and keep_going() and heap[0][0] <= t_max:
            at, _, action = pop(heap)
            self.now = at
            dispatch[type(action)](action)
