"""Pluggable congestion control and the dual-slot hot-swap mechanism.

Two reference algorithms ship with the simulator: an ACK-clocked fixed
window and a rate-based controller driven by congestion notifications with
an EWMA severity estimate (multiplicative decrease, staged recovery).  A
slot pair holds the active algorithm plus an optional shadow that is loaded
in the background and warmed with the live signal stream before a swap, so
the swap itself has no coverage gap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .core import ConfigError, SimTime

# Effectively unbounded in-flight allowance for purely rate-paced algorithms.
UNBOUNDED_ALLOWANCE = 1 << 62

DEFAULT_RECONFIG_DELAY_NS = 8_000_000


@dataclass(frozen=True)
class Ack:
    bytes: int
    rtt_ns: int = 0


@dataclass(frozen=True)
class EcnEcho:
    at: SimTime


@dataclass(frozen=True)
class Cnp:
    at: SimTime = 0


@dataclass(frozen=True)
class Timer:
    at: SimTime


@dataclass(frozen=True)
class Sent:
    bytes: int


CcSignal = object  # union of the five signal dataclasses above


@dataclass(frozen=True)
class CcDecision:
    """What the sender may do right now.

    ``allowance_bytes`` is the headroom available for new in-flight bytes;
    ``pacing_rate_bps`` when set caps the departure rate.  At least one of
    the two binds.
    """

    allowance_bytes: int
    pacing_rate_bps: Optional[float] = None


class WindowCc:
    """Fixed window W, ACK-clocked: Sent consumes headroom, Ack restores it.

    Congestion notifications are ignored by design; self-pacing comes from
    the ACK clock alone.
    """

    kind = "window"

    def __init__(self, window_bytes: int):
        if window_bytes <= 0:
            raise ConfigError("window must be positive")
        self.window_bytes = window_bytes
        self.in_flight = 0

    def update(self, signal: CcSignal) -> CcDecision:
        if isinstance(signal, Sent):
            self.in_flight += signal.bytes
        elif isinstance(signal, Ack):
            self.in_flight = max(0, self.in_flight - signal.bytes)
        return self.decision()

    def decision(self) -> CcDecision:
        return CcDecision(allowance_bytes=max(0, self.window_bytes - self.in_flight))

    def next_deadline(self) -> Optional[SimTime]:
        return None


@dataclass
class DcqcnParams:
    line_rate_bps: float
    g: float = 1.0 / 256.0
    alpha_timer_ns: int = 55_000
    rate_timer_ns: int = 55_000
    byte_counter_bytes: int = 10_000_000
    ai_rate_bps: Optional[float] = None      # default line/100
    hai_rate_bps: Optional[float] = None     # default 5 * ai
    fast_recovery_steps: int = 5
    min_rate_bps: Optional[float] = None     # default: one additive step

    def __post_init__(self):
        if self.line_rate_bps <= 0:
            raise ConfigError("line rate must be positive")
        if self.ai_rate_bps is None:
            self.ai_rate_bps = self.line_rate_bps / 100.0
        if self.hai_rate_bps is None:
            self.hai_rate_bps = 5.0 * self.ai_rate_bps
        if self.min_rate_bps is None:
            # Floor at one additive step: a freshly-swapped controller that
            # warmed up under heavy marking still makes forward progress.
            self.min_rate_bps = self.ai_rate_bps


@dataclass
class DcqcnState:
    rate_current_bps: float
    rate_target_bps: float
    alpha: float
    byte_counter: int = 0
    timer_counter: int = 0
    increase_stage: int = 0          # increase events since the last decrease
    bytes_since_event: int = 0
    alpha_deadline: Optional[SimTime] = None
    rate_deadline: Optional[SimTime] = None


class DcqcnCc:
    """Notification-driven rate controller.

    A congestion notification (Cnp or EcnEcho) sets the target to the
    current rate, cuts the current rate by a factor (1 - alpha/2) and
    refreshes alpha.  Absent notifications, alpha decays on its timer and
    the rate recovers toward the target: the first few events halve the
    gap (fast recovery), later events also push the target up additively,
    then in larger steps once both the timer and byte counter have matured.
    """

    kind = "dcqcn"

    def __init__(self, params: DcqcnParams, now: SimTime = 0):
        self.params = params
        self.state = DcqcnState(
            rate_current_bps=params.line_rate_bps,
            rate_target_bps=params.line_rate_bps,
            alpha=1.0,
            alpha_deadline=now + params.alpha_timer_ns,
            rate_deadline=now + params.rate_timer_ns,
        )

    def update(self, signal: CcSignal) -> CcDecision:
        st, p = self.state, self.params
        if isinstance(signal, (Cnp, EcnEcho)):
            now = signal.at
            self._catch_up(now)
            st.rate_target_bps = st.rate_current_bps
            st.rate_current_bps = max(
                p.min_rate_bps, st.rate_current_bps * (1.0 - st.alpha / 2.0))
            st.alpha = (1.0 - p.g) * st.alpha + p.g
            st.byte_counter = 0
            st.timer_counter = 0
            st.increase_stage = 0
            st.bytes_since_event = 0
            st.alpha_deadline = now + p.alpha_timer_ns
            st.rate_deadline = now + p.rate_timer_ns
        elif isinstance(signal, Timer):
            self._catch_up(signal.at)
        elif isinstance(signal, Sent):
            st.bytes_since_event += signal.bytes
            while st.bytes_since_event >= p.byte_counter_bytes:
                st.bytes_since_event -= p.byte_counter_bytes
                st.byte_counter += 1
                self._increase()
        # Acks carry no information this algorithm uses.
        return self.decision()

    def _catch_up(self, now: SimTime) -> None:
        st, p = self.state, self.params
        while st.alpha_deadline is not None and st.alpha_deadline <= now:
            st.alpha = (1.0 - p.g) * st.alpha
            st.alpha_deadline += p.alpha_timer_ns
        while st.rate_deadline is not None and st.rate_deadline <= now:
            st.timer_counter += 1
            self._increase()
            st.rate_deadline += p.rate_timer_ns

    def _increase(self) -> None:
        st, p = self.state, self.params
        f = p.fast_recovery_steps
        if st.timer_counter > f and st.byte_counter > f:
            st.rate_target_bps += p.hai_rate_bps
        elif st.timer_counter > f or st.byte_counter > f:
            st.rate_target_bps += p.ai_rate_bps
        st.rate_target_bps = min(st.rate_target_bps, p.line_rate_bps)
        st.rate_current_bps = (st.rate_target_bps + st.rate_current_bps) / 2.0
        st.increase_stage += 1

    def decision(self) -> CcDecision:
        return CcDecision(
            allowance_bytes=UNBOUNDED_ALLOWANCE,
            pacing_rate_bps=self.state.rate_current_bps,
        )

    def next_deadline(self) -> Optional[SimTime]:
        st = self.state
        deadlines = [d for d in (st.alpha_deadline, st.rate_deadline) if d is not None]
        return min(deadlines) if deadlines else None


CcFactory = Callable[[SimTime], object]


class DualSlot:
    """Active/shadow algorithm pair with hidden reconfiguration latency.

    Loading installs a fresh algorithm into the shadow position; the load
    occupies ``reconfig_delay_ns`` during which the shadow is opaque.  From
    ``shadow_ready_at`` onward the shadow consumes every signal the active
    consumes, warming its state, and a swap promotes it with that warmed
    state.  Exactly one algorithm is active at all times; the decision at
    the swap instant already comes from the new active.
    """

    def __init__(self, active, reconfig_delay_ns: int = DEFAULT_RECONFIG_DELAY_NS):
        self.active = active
        self.shadow = None
        self.shadow_ready_at: Optional[SimTime] = None
        self._pending_factory: Optional[CcFactory] = None
        self.reconfig_delay_ns = reconfig_delay_ns
        self.swaps = 0

    def load_shadow(self, factory: CcFactory, now: SimTime) -> SimTime:
        """Begin loading; returns the completion time.  A load already in
        progress is replaced."""
        self._pending_factory = factory
        self.shadow = None
        self.shadow_ready_at = now + self.reconfig_delay_ns
        return self.shadow_ready_at

    def _maybe_finish_load(self, now: SimTime) -> None:
        if (self._pending_factory is not None
                and self.shadow_ready_at is not None
                and now >= self.shadow_ready_at):
            self.shadow = self._pending_factory(self.shadow_ready_at)
            self._pending_factory = None

    def shadow_ready(self, now: SimTime) -> bool:
        return self.shadow_ready_at is not None and now >= self.shadow_ready_at

    def update(self, signal: CcSignal, now: SimTime) -> CcDecision:
        self._maybe_finish_load(now)
        if self.shadow is not None:
            self.shadow.update(signal)
        return self.active.update(signal)

    def decision(self) -> CcDecision:
        return self.active.decision()

    def swap_active(self, now: SimTime) -> bool:
        """Promote the shadow.  Rejected (False) unless the shadow is ready;
        the old active is discarded and the shadow position becomes empty."""
        self._maybe_finish_load(now)
        if self.shadow is None:
            return False
        self.active = self.shadow
        self.shadow = None
        self.shadow_ready_at = None
        self.swaps += 1
        return True

    def next_deadline(self) -> Optional[SimTime]:
        deadlines = [self.active.next_deadline()]
        if self.shadow is not None:
            deadlines.append(self.shadow.next_deadline())
        if self.shadow_ready_at is not None and self.shadow is None:
            deadlines.append(self.shadow_ready_at)
        deadlines = [d for d in deadlines if d is not None]
        return min(deadlines) if deadlines else None
