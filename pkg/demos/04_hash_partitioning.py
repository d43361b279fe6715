"""Streaming hash partitioning with bounded flushes.

A two-column table (8-byte key, 8-byte payload per row) streams through
the partitioner, which folds the key columns into a 32-bit hash, spreads
rows over four destinations, and emits 64 KiB-aligned flushes as buffers
fill.  The partitioning is a pure function of the key, so re-running or
re-batching never changes what lands where.
"""

import collections

import numpy as np

from scenicsim import HashPartitioner

ROWS = 200_000
WIDTH = 16
G = 4

rng = np.random.default_rng(7)
table = rng.bytes(ROWS * WIDTH)

part = HashPartitioner(num_dests=G, row_width_bytes=WIDTH, key_cols=1)
flushes = collections.Counter()
bytes_out = collections.Counter()
for off in range(0, len(table), 64 * 1024):
    for ev in part.ingest(table[off:off + 64 * 1024]):
        flushes[ev.dest] += 1
        bytes_out[ev.dest] += len(ev.data)
for ev in part.finish():
    flushes[ev.dest] += 1
    bytes_out[ev.dest] += len(ev.data)

print(f"{ROWS} rows of {WIDTH} B over {G} destinations")
print(f"{'dest':>4} {'flushes':>8} {'bytes':>10} {'rows':>8} {'of total':>9}")
for dest in range(G):
    rows = bytes_out[dest] // WIDTH
    print(f"{dest:>4} {flushes[dest]:>8} {bytes_out[dest]:>10} {rows:>8}"
          f" {rows / ROWS:>8.1%}")

largest = 65536 // WIDTH * WIDTH
print(f"\nevery non-final flush is {largest} bytes"
      f" (the largest whole-row multiple below 64 KiB)")
print(f"slots in use at end of batch window: {part.slots_in_use()}"
      f" of {part.hash_slots}")
