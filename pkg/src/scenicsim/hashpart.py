"""Streaming hash partitioner: composite-key hash folding, per-destination
accumulation, and bounded-size flushes.

Rows are fixed-width records whose leading 8-byte little-endian words form
the composite key.  Each key column is hashed with a 32-bit multiplicative
(Fibonacci) hash and the column hashes are folded into one 32-bit value:
column i's hash is rotated left by 5*i bits and XORed in.  Column value 0
hashes to 0 and is therefore the fold identity.  The destination of a row
is ``fold % num_dests`` and depends on nothing but the key.

Output buffers flush just before an append would push them past
``flush_bytes``, so every non-final flush is the largest whole-row multiple
that fits.  An on-chip hash-slot pool bounds how many rows can be hashed
per pass; after ``batch_rows`` rows the slots recycle (a new batch starts),
which is pure bookkeeping and never changes the partitioning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

from .core import ConfigError

HASH_MULT = 0x9E3779B9
MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_FLUSH_BYTES = 65536
DEFAULT_BATCH_ROWS = 1 << 19
DEFAULT_HASH_SLOTS = 1 << 20  # 16 * 2**16


def hash32(value: int) -> int:
    """Multiplicative 32-bit hash of one 64-bit column value."""
    return ((value & MASK64) * HASH_MULT) & MASK32


def rotl32(x: int, r: int) -> int:
    r &= 31
    return ((x << r) | (x >> (32 - r))) & MASK32


def hash_fold(key_values: Sequence[int]) -> int:
    """Fold per-column hashes into one 32-bit partitioning hash."""
    if not key_values:
        raise ConfigError("at least one key column is required")
    acc = 0
    rot = 0
    for value in key_values:
        acc ^= rotl32(hash32(value), rot)
        rot += 5
    return acc


@dataclass(frozen=True)
class FlushEvent:
    dest: int
    data: bytes
    rows: int
    final: bool = False


class HashPartitioner:
    def __init__(self, num_dests: int, row_width_bytes: int, key_cols: int = 1,
                 flush_bytes: int = DEFAULT_FLUSH_BYTES,
                 batch_rows: int = DEFAULT_BATCH_ROWS,
                 hash_slots: int = DEFAULT_HASH_SLOTS):
        if num_dests < 1:
            raise ConfigError("need at least one destination")
        if row_width_bytes < 1:
            raise ConfigError("row width must be positive")
        if key_cols < 1 or key_cols * 8 > row_width_bytes:
            raise ConfigError("key columns must fit inside the row")
        if batch_rows > hash_slots:
            raise ConfigError("batch cannot exceed the hash slot pool")
        self.num_dests = num_dests
        self.row_width = row_width_bytes
        self.key_cols = key_cols
        self.flush_bytes = flush_bytes
        self.batch_rows = batch_rows
        self.hash_slots = hash_slots
        self.out_buffers: List[bytearray] = [bytearray() for _ in range(num_dests)]
        self.out_rows: List[int] = [0] * num_dests
        self.rows_ingested = 0
        self.batches_started = 0
        self._rows_in_batch = 0
        self._pending = b""  # partial row carried between stream chunks

    def dest_of(self, row: bytes) -> int:
        keys = [int.from_bytes(row[i * 8:(i + 1) * 8], "little")
                for i in range(self.key_cols)]
        return hash_fold(keys) % self.num_dests

    def ingest_row(self, row: bytes) -> List[FlushEvent]:
        if len(row) != self.row_width:
            raise ConfigError(f"row of {len(row)} bytes, expected {self.row_width}")
        if self._rows_in_batch == 0:
            self.batches_started += 1
        dest = self.dest_of(row)
        events: List[FlushEvent] = []
        buf = self.out_buffers[dest]
        if len(buf) + self.row_width > self.flush_bytes and buf:
            events.append(FlushEvent(dest, bytes(buf), self.out_rows[dest]))
            self.out_buffers[dest] = buf = bytearray()
            self.out_rows[dest] = 0
        buf += row
        self.out_rows[dest] += 1
        self.rows_ingested += 1
        self._rows_in_batch += 1
        if self._rows_in_batch >= self.batch_rows:
            self._rows_in_batch = 0  # slots recycle; partitioning unaffected
        return events

    def ingest(self, data: bytes) -> List[FlushEvent]:
        """Stream interface: consume a chunk, buffering any trailing partial
        row until the next chunk arrives."""
        events: List[FlushEvent] = []
        if self._pending:
            data = self._pending + data
            self._pending = b""
        full = len(data) // self.row_width * self.row_width
        for off in range(0, full, self.row_width):
            events.extend(self.ingest_row(data[off:off + self.row_width]))
        if full < len(data):
            self._pending = bytes(data[full:])
        return events

    def finish(self) -> List[FlushEvent]:
        """Drain the remaining partial buffers as final flushes."""
        if self._pending:
            raise ConfigError(
                f"stream ended mid-row: {len(self._pending)} trailing bytes")
        events = []
        for dest, buf in enumerate(self.out_buffers):
            if buf:
                events.append(FlushEvent(dest, bytes(buf), self.out_rows[dest], final=True))
        self.out_buffers = [bytearray() for _ in range(self.num_dests)]
        self.out_rows = [0] * self.num_dests
        return events

    def slots_in_use(self) -> int:
        return self._rows_in_batch
