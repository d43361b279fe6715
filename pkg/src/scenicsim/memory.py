"""Virtual memory regions and the address-translation cache.

Each node owns one AddressSpace.  Registering a region assigns physical
pages from a bump allocator (the assignment is stable for the lifetime of
the region, so re-registration is idempotent) and pre-populates the TLB.
The TLB caches a bounded number of translations with least-recently-used
eviction; recency is access order, and the stored ``last_use`` records the
time of that access.  Misses on registered pages are resolved from the
page table at a fixed modeled latency; unregistered addresses fault.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .core import AccessFault, ConfigError, SimTime

DEFAULT_PAGE_SIZE = 4096
DEFAULT_TLB_CAPACITY = 64
DEFAULT_MISS_LATENCY_NS = 1000


@dataclass
class TlbEntry:
    ppage: int
    last_use: SimTime


class Tlb:
    """Translation cache with LRU replacement.

    entries is kept in recency order (oldest first); the eviction victim is
    always the least recently used entry.
    """

    def __init__(self, capacity: int = DEFAULT_TLB_CAPACITY,
                 page_size: int = DEFAULT_PAGE_SIZE,
                 miss_latency_ns: int = DEFAULT_MISS_LATENCY_NS):
        if capacity < 1:
            raise ConfigError("TLB capacity must be at least 1")
        self.capacity = capacity
        self.page_size = page_size
        self.miss_latency_ns = miss_latency_ns
        self.entries: "OrderedDict[int, TlbEntry]" = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def probe(self, vpage: int) -> bool:
        """Presence check with no recency side effect."""
        return vpage in self.entries

    def touch(self, vpage: int, ppage: int, now: SimTime) -> bool:
        """Record a use of ``vpage``.  Returns True on hit.

        On a miss the entry is installed (evicting the LRU victim at
        capacity).  The caller accounts for the miss latency.
        """
        entry = self.entries.get(vpage)
        if entry is not None:
            entry.last_use = now
            self.entries.move_to_end(vpage)
            self.hits += 1
            return True
        self.misses += 1
        if len(self.entries) >= self.capacity:
            self.entries.popitem(last=False)
            self.evictions += 1
        self.entries[vpage] = TlbEntry(ppage, now)
        return False


@dataclass
class MemoryRegion:
    handle: int
    base: int
    length: int
    first_vpage: int
    first_ppage: int
    data: Optional[bytearray]


class AddressSpace:
    """Registered regions, the authoritative page table, and the TLB."""

    def __init__(self, tlb: Optional[Tlb] = None, materialize: bool = True):
        self.tlb = tlb if tlb is not None else Tlb()
        self.materialize = materialize
        self.regions: List[MemoryRegion] = []
        self._page_table: Dict[int, int] = {}
        self._next_ppage = 0

    @property
    def page_size(self) -> int:
        return self.tlb.page_size

    def register(self, base: int, length: int, now: SimTime = 0) -> MemoryRegion:
        """Register [base, base+length) and pre-populate the TLB.

        Exact re-registration returns the existing region and refreshes the
        TLB entries; partial overlap with an existing region is rejected.
        """
        if length <= 0:
            raise ConfigError("region length must be positive")
        for region in self.regions:
            if region.base == base and region.length == length:
                self._populate_tlb(region, now)
                return region
            if base < region.base + region.length and region.base < base + length:
                raise ConfigError("region overlaps an existing registration")
        ps = self.page_size
        first_vpage = base // ps
        last_vpage = (base + length - 1) // ps
        npages = last_vpage - first_vpage + 1
        first_ppage = self._next_ppage
        for i in range(npages):
            self._page_table[first_vpage + i] = first_ppage + i
        self._next_ppage += npages
        data = bytearray(length) if self.materialize else None
        region = MemoryRegion(len(self.regions), base, length, first_vpage, first_ppage, data)
        self.regions.append(region)
        self._populate_tlb(region, now)
        return region

    def _populate_tlb(self, region: MemoryRegion, now: SimTime) -> None:
        ps = self.page_size
        last_vpage = (region.base + region.length - 1) // ps
        for vpage in range(region.first_vpage, last_vpage + 1):
            self.tlb.touch(vpage, self._page_table[vpage], now)

    def region_of(self, vaddr: int, length: int = 1) -> Optional[MemoryRegion]:
        for region in self.regions:
            if region.base <= vaddr and vaddr + length <= region.base + region.length:
                return region
        return None

    def lookup(self, vaddr: int, now: SimTime = 0) -> Tuple[int, bool, int]:
        """Translate one address: (paddr, hit, extra latency in ns)."""
        vpage, offset = divmod(vaddr, self.page_size)
        ppage = self._page_table.get(vpage)
        if ppage is None:
            raise AccessFault(f"address {vaddr:#x} is not registered")
        hit = self.tlb.touch(vpage, ppage, now)
        latency = 0 if hit else self.tlb.miss_latency_ns
        return ppage * self.page_size + offset, hit, latency

    def access_latency(self, vaddr: int, length: int, now: SimTime = 0) -> int:
        """Total translation latency for touching [vaddr, vaddr+length)."""
        if length <= 0:
            return 0
        ps = self.page_size
        tlb = self.tlb
        table = self._page_table
        total = 0
        for vpage in range(vaddr // ps, (vaddr + length - 1) // ps + 1):
            ppage = table.get(vpage)
            if ppage is None:
                raise AccessFault(f"address {vpage * ps:#x} is not registered")
            if not tlb.touch(vpage, ppage, now):
                total += tlb.miss_latency_ns
        return total

    def write(self, vaddr: int, data: bytes) -> None:
        region = self.region_of(vaddr, len(data))
        if region is None:
            raise AccessFault(f"write of {len(data)} bytes at {vaddr:#x} outside regions")
        if region.data is not None:
            start = vaddr - region.base
            region.data[start:start + len(data)] = data

    def read(self, vaddr: int, length: int) -> bytes:
        region = self.region_of(vaddr, length)
        if region is None:
            raise AccessFault(f"read of {length} bytes at {vaddr:#x} outside regions")
        if region.data is None:
            return b"\x00" * length
        start = vaddr - region.base
        return bytes(region.data[start:start + length])
