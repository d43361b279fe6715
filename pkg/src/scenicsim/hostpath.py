"""Slow-path host delivery: metadata-tagged ring protocol and interrupt
coalescing.

Each delivered packet becomes one ring entry: an 8-byte tag (payload length
as little-endian u32, a flags byte with bit 0 = valid, three reserved zero
bytes) followed by the payload, zero-padded to the next 8-byte boundary.
Tag and payload are written by a single DMA transaction; a reference
split mode that spends two transactions per packet exists for comparison.
The consumer trusts the valid bit last, so the producer sets it after the
payload bytes in program order.

Interrupts are coalesced: fire once N packets are pending, or once the
oldest pending packet has waited T nanoseconds.  At most one interrupt is
in flight per ring; the next one can only fire after the driver's poll
completes.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

from .core import ConfigError, ProtocolError, SimTime

TAG_BYTES = 8
ALIGN = 8
FLAG_VALID = 0x01

_TAG = struct.Struct("<IB3s")


def entry_size(payload_len: int) -> int:
    padded = (payload_len + ALIGN - 1) // ALIGN * ALIGN
    return TAG_BYTES + padded


def encode_entry(payload: bytes, valid: bool = True) -> bytes:
    """One entry in the golden dump layout."""
    tag = _TAG.pack(len(payload), FLAG_VALID if valid else 0, b"\x00\x00\x00")
    padded = (len(payload) + ALIGN - 1) // ALIGN * ALIGN
    return tag + payload + b"\x00" * (padded - len(payload))


def encode_entries(payloads: List[bytes]) -> bytes:
    return b"".join(encode_entry(p) for p in payloads)


def decode_entries(blob: bytes) -> List[bytes]:
    out = []
    off = 0
    while off + TAG_BYTES <= len(blob):
        length, flags, reserved = _TAG.unpack_from(blob, off)
        if reserved != b"\x00\x00\x00":
            raise ProtocolError(f"nonzero reserved tag bytes at offset {off}")
        if not flags & FLAG_VALID:
            break
        start = off + TAG_BYTES
        out.append(bytes(blob[start:start + length]))
        off = start + (length + ALIGN - 1) // ALIGN * ALIGN
    return out


class Ring:
    """Single-producer single-consumer byte ring.

    The producer never overwrites unconsumed entries; when there is not
    enough free space the packet is dropped and counted, mirroring NIC
    behavior under host overload.
    """

    def __init__(self, capacity_bytes: int = 1 << 16, dma_mode: str = "combined"):
        if capacity_bytes <= 0 or capacity_bytes & (capacity_bytes - 1):
            raise ConfigError("ring capacity must be a power of two")
        if dma_mode not in ("combined", "split"):
            raise ConfigError("dma_mode must be 'combined' or 'split'")
        self.capacity = capacity_bytes
        self.dma_mode = dma_mode
        self.buf = bytearray(capacity_bytes)
        self._head = 0   # monotonic producer offset
        self._tail = 0   # monotonic consumer offset
        self.dma_tx_count = 0
        self.enqueued = 0
        self.delivered = 0
        self.dropped = 0

    @property
    def head(self) -> int:
        return self._head % self.capacity

    @property
    def tail(self) -> int:
        return self._tail % self.capacity

    def free_bytes(self) -> int:
        return self.capacity - (self._head - self._tail)

    def _write(self, offset: int, data: bytes) -> None:
        pos = offset % self.capacity
        end = pos + len(data)
        if end <= self.capacity:
            self.buf[pos:end] = data
        else:
            split = self.capacity - pos
            self.buf[pos:] = data[:split]
            self.buf[: end - self.capacity] = data[split:]

    def _read(self, offset: int, length: int) -> bytes:
        pos = offset % self.capacity
        end = pos + length
        if end <= self.capacity:
            return bytes(self.buf[pos:end])
        split = self.capacity - pos
        return bytes(self.buf[pos:]) + bytes(self.buf[: end - self.capacity])

    def rx_enqueue(self, payload: bytes) -> bool:
        """Produce one entry.  Returns False (and counts a drop) when full."""
        size = entry_size(len(payload))
        if size > self.free_bytes():
            self.dropped += 1
            return False
        base = self._head
        padded = size - TAG_BYTES
        # Tag minus the flags byte first, then the payload, then the valid
        # flag: the consumer may trust a set valid bit unconditionally.
        self._write(base, struct.pack("<I", len(payload)) + b"\x00" * 4)
        self._write(base + TAG_BYTES, payload + b"\x00" * (padded - len(payload)))
        self._write(base + 4, bytes([FLAG_VALID]))
        self._head = base + size
        self.dma_tx_count += 1 if self.dma_mode == "combined" else 2
        self.enqueued += 1
        return True

    def driver_poll(self, budget: int = 64) -> List[bytes]:
        """Consume up to ``budget`` valid entries in FIFO order.

        Stops at the first invalid tag.  A tag with nonzero reserved bytes
        aborts the poll: the protocol was violated.
        """
        out: List[bytes] = []
        while len(out) < budget and self._tail < self._head:
            tag = self._read(self._tail, TAG_BYTES)
            length, flags, reserved = _TAG.unpack(tag)
            if reserved != b"\x00\x00\x00":
                raise ProtocolError(
                    f"corrupt ring tag at offset {self.tail}: reserved bytes set")
            if not flags & FLAG_VALID:
                break
            out.append(self._read(self._tail + TAG_BYTES, length))
            self._write(self._tail + 4, b"\x00")  # clear valid
            self._tail += entry_size(length)
        self.delivered += len(out)
        return out


@dataclass
class IrqConfig:
    coalesce_count: int = 32
    timeout_ns: int = 100_000

    def __post_init__(self):
        if self.coalesce_count < 1:
            raise ConfigError("coalesce count must be at least 1")
        if self.timeout_ns <= 0:
            raise ConfigError("interrupt timeout must be positive")


class IrqDecision(Enum):
    FIRE = "fire"
    WAIT = "wait"


def irq_decision(pending: int, first_pending_at: Optional[SimTime],
                 now: SimTime, cfg: IrqConfig) -> IrqDecision:
    """Coalescing rule: fire on N pending, or on one pending for T ns."""
    if pending < 0:
        raise ValueError("pending count cannot be negative")
    if pending >= cfg.coalesce_count:
        return IrqDecision.FIRE
    if pending >= 1 and first_pending_at is not None \
            and now - first_pending_at >= cfg.timeout_ns:
        return IrqDecision.FIRE
    return IrqDecision.WAIT


class IrqCoalescer:
    """Interrupt state for one ring: pending arrivals, one in-flight IRQ.

    The caller schedules a timeout check at ``timeout_due()`` whenever it
    changes, and calls ``on_timeout`` when it fires.  Latency accounting
    tracks the oldest pending arrival exactly.
    """

    def __init__(self, cfg: IrqConfig):
        self.cfg = cfg
        self.arrivals: deque = deque()
        self.in_flight = False
        self.irqs_fired = 0
        self.timeout_fires = 0
        self.max_tag_to_irq_ns = 0

    @property
    def pending(self) -> int:
        return len(self.arrivals)

    def first_pending_at(self) -> Optional[SimTime]:
        return self.arrivals[0] if self.arrivals else None

    def timeout_due(self) -> Optional[SimTime]:
        if self.in_flight or not self.arrivals:
            return None
        return self.arrivals[0] + self.cfg.timeout_ns

    def _try_fire(self, now: SimTime, via_timeout: bool = False) -> bool:
        if self.in_flight or not self.arrivals:
            return False
        if irq_decision(self.pending, self.arrivals[0], now, self.cfg) is IrqDecision.WAIT:
            return False
        self.in_flight = True
        self.irqs_fired += 1
        if via_timeout:
            self.timeout_fires += 1
        lag = now - self.arrivals[0]
        if lag > self.max_tag_to_irq_ns:
            self.max_tag_to_irq_ns = lag
        return True

    def on_packet(self, now: SimTime) -> bool:
        """Register one enqueued packet; True when an interrupt fires now."""
        self.arrivals.append(now)
        return self._try_fire(now)

    def on_timeout(self, now: SimTime) -> bool:
        return self._try_fire(now, via_timeout=True)

    def on_poll_complete(self, now: SimTime, consumed: int) -> bool:
        """Driver finished a poll of ``consumed`` packets; the in-flight
        interrupt retires and, with backlog remaining, may refire at once."""
        for _ in range(min(consumed, len(self.arrivals))):
            self.arrivals.popleft()
        self.in_flight = False
        return self._try_fire(now)
