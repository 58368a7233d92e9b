"""Persistent region geometry: array blocks, undo-log slots, heap placement.

All integers are little-endian.  See docs/FORMAT.md for the byte layout.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from .encoding import ENTRY_BYTES, GAP
from .errors import CorruptRegion, RegionCapacityExceeded
from .pm_region import HEADER_SIZE, LINE, H_HEAP_LEN, H_HEAP_OFF, H_ULOG_COUNT, H_ULOG_OFF, H_ULOG_SZ

ARRAY_MAGIC = b"PMAARRAY"
DESC = struct.Struct("<8sQQQQQdddd")  # magic, slots, seg_slots, elog_sz, n_sections, generation, rho/tau leaf, rho/tau root
DESC_BYTES = 128
ULOG_HEADER = 64
_U64 = struct.Struct("<Q")


def align(n, a=LINE):
    return -(-n // a) * a


@dataclass(frozen=True)
class ArrayGeometry:
    """Where one generation of edge array + section logs lives."""

    base: int
    slots: int
    seg_slots: int
    elog_sz: int
    generation: int = 0

    def __post_init__(self):
        # derived offsets are hot in the insert path: compute once
        n = self.slots // self.seg_slots
        stride = align(self.elog_sz)
        tails = self.base + DESC_BYTES
        logs = tails + align(8 * n)
        put = object.__setattr__
        put(self, "n_sections", n)
        put(self, "log_stride", stride)
        put(self, "tails_off", tails)
        put(self, "logs_off", logs)
        put(self, "slots_off", logs + n * stride)
        put(self, "log_capacity", self.elog_sz // ENTRY_BYTES)

    @property
    def size(self):
        return self.slots_off + 4 * self.slots - self.base

    @property
    def end(self):
        return self.base + self.size

    def tail_off(self, section):
        return self.tails_off + 8 * section

    def entry_off(self, section, index):
        return self.logs_off + section * self.log_stride + index * ENTRY_BYTES

    def slot_off(self, i):
        return self.slots_off + 4 * i

    @staticmethod
    def block_size(slots, seg_slots, elog_sz):
        g = ArrayGeometry(0, slots, seg_slots, elog_sz)
        return g.size

    def descriptor(self, thresholds):
        data = DESC.pack(ARRAY_MAGIC, self.slots, self.seg_slots, self.elog_sz, self.n_sections,
                         self.generation, thresholds.rho_leaf, thresholds.tau_leaf,
                         thresholds.rho_root, thresholds.tau_root)
        return data.ljust(DESC_BYTES, b"\0")

    @classmethod
    def read(cls, buf, base):
        from .pma import Thresholds

        if base <= 0 or base + DESC.size > len(buf):
            raise CorruptRegion(f"active edge array offset {base} out of range")
        (magic, slots, seg, elog, nsec, gen, rl, tl, rr, tr) = DESC.unpack_from(buf, base)
        if magic != ARRAY_MAGIC or slots % seg or nsec != slots // seg:
            raise CorruptRegion("bad edge array descriptor")
        return cls(base, slots, seg, elog, gen), Thresholds(rl, tl, rr, tr)


def write_fresh_array(region, geom, thresholds, words=None):
    """Durably lay out a whole array block (descriptor, zero tails, slots).

    Nothing points at the block yet, so the writes need no journaling.
    """
    region.store(geom.base, geom.descriptor(thresholds), payload=0)
    region.store(geom.tails_off, bytes(align(8 * geom.n_sections)), payload=0)
    if words is None:
        data = b"\xff" * (4 * geom.slots)
    else:
        data = struct.pack(f"<{geom.slots}I", *words)
    region.store(geom.slots_off, data, payload=0)
    region.flush(geom.base, geom.logs_off - geom.base)
    region.flush(geom.slots_off, 4 * geom.slots)
    region.fence()


class Heap:
    """First-fit placement of blocks in the heap area, avoiding live blocks."""

    def __init__(self, start, end):
        self.start = align(start)
        self.end = end

    def place(self, size, avoid=()):
        size = align(size)
        spans = sorted((a, b) for a, b in avoid if b > a)
        pos = self.start
        for a, b in spans:
            if pos + size <= a:
                break
            pos = max(pos, align(b))
        if pos + size > self.end:
            raise RegionCapacityExceeded(
                f"need {size} bytes of heap, region heap is [{self.start}, {self.end})")
        return pos


def undo_area_size(count, ulog_sz):
    return count * (ULOG_HEADER + align(ulog_sz) + LINE)


def init_undo_area(region, count, ulog_sz):
    """Reserve the per-writer undo logs right after the header; returns heap start."""
    off = HEADER_SIZE
    size = undo_area_size(count, ulog_sz)
    heap_off = off + size
    if heap_off >= region.capacity:
        raise RegionCapacityExceeded("region too small for undo logs")
    region.store(H_ULOG_OFF, _U64.pack(off), payload=0)
    region.store(H_ULOG_COUNT, _U64.pack(count), payload=0)
    region.store(H_ULOG_SZ, _U64.pack(ulog_sz), payload=0)
    region.store(H_HEAP_OFF, _U64.pack(heap_off), payload=0)
    region.store(H_HEAP_LEN, _U64.pack(region.capacity - heap_off), payload=0)
    # headers start inactive
    region.store(off, bytes(size), payload=0)
    region.flush(0, HEADER_SIZE)
    region.flush(off, size)
    region.fence()
    return heap_off


# ----------------------------------------------------------------- undo logs

U_ACTIVE = 0
U_DEST = 8
U_LEN = 16
U_SUM = 24
U_PBASE = 32


def _checksum(dest, pbase, payload):
    h = hashlib.blake2b(digest_size=8)
    h.update(_U64.pack(dest))
    h.update(_U64.pack(pbase))
    h.update(_U64.pack(len(payload)))
    h.update(payload)
    return int.from_bytes(h.digest(), "little") | 1


class UndoLog:
    """One writer's persistent backup buffer.

    Header line: active, dest (region byte offset), length, checksum.  The
    payload sits at the same offset-within-line as its destination so a
    backup spans exactly as many cache lines as the bytes it protects.  A
    header is trusted only when active == 1 and the checksum matches, which
    makes a single fence enough to publish it even under torn writes.

    ``payload_base`` may point outside the undo area (a heap scratch block)
    for the full-copy journal used by the ablation modes.
    """

    def __init__(self, region, off, ulog_sz, owner=0):
        self.region = region
        self.off = off
        self.capacity = ulog_sz
        self.owner = owner
        self.payload_base = off + ULOG_HEADER
        self.chunks = 0

    def publish(self, dest, old, payload_base=None):
        region = self.region
        base = self.payload_base if payload_base is None else payload_base
        poff = base + dest % LINE
        region.store(poff, old, payload=0)
        head = struct.pack("<QQQQQ", 1, dest, len(old), _checksum(dest, base, old), base)
        region.store(self.off, head, payload=0)
        region.flush(poff, len(old))
        region.flush(self.off, 40)
        region.fence()
        self.chunks += 1

    def clear(self):
        region = self.region
        region.atomic_store_8(self.off + U_ACTIVE, 0)
        region.atomic_store_8(self.off + U_SUM, 0)
        region.flush(self.off, 32)
        region.fence()
        self.chunks += 1


def read_undo(buf, off):
    """Validated (dest, payload) of an active undo header, else None."""
    active, dest, length, csum, pbase = struct.unpack_from("<QQQQQ", buf, off)
    if active != 1 or csum == 0:
        return None
    poff = pbase + dest % LINE
    if poff + length > len(buf) or dest + length > len(buf):
        return None
    payload = bytes(buf[poff:poff + length])
    if _checksum(dest, pbase, payload) != csum:
        return None
    return dest, payload


def gap_words(n):
    return [GAP] * n
