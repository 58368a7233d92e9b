"""Bit-level encodings of edge-array slots and edge-log entries.

Slot word (u32, little-endian): top two bits are the tag, low 30 bits the
payload.

    00  live edge       payload = destination id
    01  tombstone       payload = destination id
    10  pivot           payload = source id (start of a vertex run)
    11  merged pivot    payload = source id, only while a log merge is in flight
    0xFFFFFFFF          gap

Vertex ids therefore stay below ``2**30 - 1`` so that a merged pivot can never
collide with the gap word.
"""

import struct

TAG_SHIFT = 30
PAYLOAD_MASK = (1 << TAG_SHIFT) - 1
TAG_MASK = 3 << TAG_SHIFT

LIVE = 0
TOMB = 1 << TAG_SHIFT
PIVOT = 2 << TAG_SHIFT
MERGED = 3 << TAG_SHIFT
GAP = 0xFFFFFFFF

MAX_VERTEX = (1 << 30) - 2  # ids must be < 2**30 - 1
NULL = 0xFFFFFFFF  # edge-log back pointer / vertex elog_head sentinel

SLOT_BYTES = 4
ENTRY = struct.Struct("<III")  # src, dst word, back
ENTRY_BYTES = ENTRY.size  # 12
_SLOT = struct.Struct("<I")
pack_slot = _SLOT.pack


def live(dst):
    return dst


def tomb(dst):
    return TOMB | dst


def pivot(v):
    return PIVOT | v


def merged(v):
    return MERGED | v


def tag(word):
    return word & TAG_MASK


def payload(word):
    return word & PAYLOAD_MASK


def is_item(word):
    """Live edge or tombstone."""
    return word < PIVOT


def is_pivot_like(word):
    return word != GAP and word >= PIVOT


def valid_id(v):
    return 0 <= v <= MAX_VERTEX


def pack_slots(words):
    return struct.pack(f"<{len(words)}I", *words)


def unpack_slots(data):
    return list(struct.unpack(f"<{len(data) // 4}I", data))
