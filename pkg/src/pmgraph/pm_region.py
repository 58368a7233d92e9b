"""Emulated byte-addressable persistent memory.

The region keeps two images.  ``working`` is what loads and stores see (the
CPU cache plus media); ``durable`` is what survives a power failure.  A store
only touches ``working``; ``flush`` captures the current contents of the
covered cache lines; ``fence`` copies every captured line into ``durable``.
Failure atomicity is 8 bytes: under torn-write crashes a flushed but unfenced
line may persist any subset of its aligned 8-byte words, never half a word.

The durable image is written back to the backing file by :meth:`sync`; the
file is a convenience for reopening across processes, not the object under
test.
"""

from __future__ import annotations

import os
import random
import struct
import sys
import threading
from dataclasses import dataclass, field

from .errors import (
    BadMagic,
    CapacityTooSmall,
    Misaligned,
    OutOfBounds,
    SimulatedCrash,
    VersionMismatch,
)

LINE = 64
XPLINE = 256
MAGIC = b"DGAPPMEM"
VERSION = 1

# RegionHeader field offsets (little-endian u64 each)
H_MAGIC = 0
H_VERSION = 8
H_NORMAL_SHUTDOWN = 16
H_ACTIVE_ARRAY = 24
H_CAPACITY = 32
H_CKPT_OFF = 40
H_CKPT_LEN = 48
H_ULOG_OFF = 56
H_ULOG_COUNT = 64
H_ULOG_SZ = 72
H_HEAP_OFF = 80
H_HEAP_LEN = 88
HEADER_SIZE = 128

_U64 = struct.Struct("<Q")

if sys.byteorder != "little":  # pragma: no cover - the word views assume LE
    raise ImportError("pmgraph requires a little-endian host")


@dataclass
class WriteStats:
    payload_bytes: int = 0
    media_bytes: int = 0
    media_bytes_256: int = 0
    flush_count: int = 0
    fence_count: int = 0
    store_count: int = 0

    @property
    def write_amplification(self):
        if self.payload_bytes == 0:
            return float("nan")
        return self.media_bytes / self.payload_bytes

    def copy(self):
        return WriteStats(**vars(self))

    def __sub__(self, other):
        return WriteStats(**{k: v - getattr(other, k) for k, v in vars(self).items()})


@dataclass(frozen=True)
class CrashPlan:
    """How a simulated power failure treats in-flight data.

    ``mode`` is one of ``"at_event"``, ``"exhaustive"`` or ``"random"``; the
    region itself only interprets ``event`` (for arming) and the persistence
    flags, the enumeration modes are driven by :mod:`pmgraph.crashsuite`.

    Flushed-but-unfenced lines are dropped by default (strict).  With
    ``permissive`` they persist whole; with ``torn_writes`` each of their
    8-byte words independently persists or not, derived from ``seed``.
    """

    mode: str = "at_event"
    event: int | None = None
    seed: int = 0
    count: int = 0
    torn_writes: bool = False
    permissive: bool = False

    @classmethod
    def at_event(cls, n, torn_writes=False, permissive=False, seed=0):
        return cls("at_event", n, seed, 0, torn_writes, permissive)

    @classmethod
    def exhaustive(cls, torn_writes=False, permissive=False, seed=0):
        return cls("exhaustive", None, seed, 0, torn_writes, permissive)

    @classmethod
    def random(cls, seed, count, torn_writes=False, permissive=False):
        return cls("random", None, seed, count, torn_writes, permissive)

    @property
    def semantics(self):
        if self.torn_writes:
            return "torn"
        return "permissive" if self.permissive else "strict"


STRICT = CrashPlan()


class PmRegion:
    """A fixed-size emulated persistent memory region."""

    def __init__(self, capacity, durable, path=None, eadr=False):
        self.capacity = capacity
        self.path = path
        self.eadr = eadr
        self.durable = durable
        self.working = bytearray(durable)
        self.u32 = memoryview(self.working).cast("I")
        self.u64 = memoryview(self.working).cast("Q")
        self.dirty = set()
        self.pending = {}
        self.event_counter = 0
        self.stats = WriteStats()
        self.observer = None
        self._trip = None
        self._trip_plan = STRICT
        self._lock = threading.RLock()
        self.crashed = False

    # ------------------------------------------------------------------ setup
    @classmethod
    def create(cls, path, capacity, eadr=False):
        if capacity < HEADER_SIZE:
            raise CapacityTooSmall(f"{capacity} < header size {HEADER_SIZE}")
        capacity = -(-capacity // LINE) * LINE
        region = cls(capacity, bytearray(capacity), path=path, eadr=eadr)
        region.store(H_MAGIC, MAGIC, payload=0)
        region.store(H_VERSION, _U64.pack(VERSION), payload=0)
        region.store(H_CAPACITY, _U64.pack(capacity), payload=0)
        region.store(H_HEAP_OFF, _U64.pack(HEADER_SIZE), payload=0)
        region.store(H_HEAP_LEN, _U64.pack(capacity - HEADER_SIZE), payload=0)
        region.atomic_store_8(H_NORMAL_SHUTDOWN, 1)
        region.flush(0, HEADER_SIZE)
        region.fence()
        region.sync()
        return region

    @classmethod
    def from_image(cls, image, path=None, eadr=False):
        """Wrap a durable image (bytes) as a freshly rebooted region."""
        region = cls(len(image), bytearray(image), path=path, eadr=eadr)
        region._check_header()
        return region

    @classmethod
    def open(cls, path, eadr=False):
        try:
            with open(path, "rb") as fh:
                image = fh.read()
        except OSError:
            raise
        region = cls.from_image(image, path=path, eadr=eadr)
        return region, region.mark_running()

    def _check_header(self):
        if len(self.durable) < HEADER_SIZE or bytes(self.durable[:8]) != MAGIC:
            raise BadMagic("region header magic mismatch")
        version = _U64.unpack_from(self.durable, H_VERSION)[0]
        if version != VERSION:
            raise VersionMismatch(f"region version {version}, expected {VERSION}")

    def mark_running(self):
        """Return the durable NORMAL_SHUTDOWN flag, then durably clear it."""
        was_normal = bool(_U64.unpack_from(self.durable, H_NORMAL_SHUTDOWN)[0])
        self.atomic_store_8(H_NORMAL_SHUTDOWN, 0)
        self.flush(H_NORMAL_SHUTDOWN, 8)
        self.fence()
        return was_normal

    def sync(self):
        if self.path is None:
            return
        tmp = f"{self.path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(self.durable)
        os.replace(tmp, self.path)

    # ------------------------------------------------------------- primitives
    def _bounds(self, offset, length):
        if offset < 0 or length < 0 or offset + length > self.capacity:
            raise OutOfBounds(f"[{offset}, {offset + length}) outside region of {self.capacity}")

    def _tick(self):
        n = self.event_counter
        if self.observer is None and self._trip is None:
            self.event_counter = n + 1
            return
        if self.observer is not None:
            self.observer(self, n)
        if self._trip is not None and n >= self._trip:
            self._crash_now(self._trip_plan, n)
            raise SimulatedCrash(n)
        self.event_counter = n + 1

    def store(self, offset, data, payload=None):
        n = len(data)
        self._bounds(offset, n)
        with self._lock:
            self._tick()
            self.working[offset:offset + n] = data
            first = offset // LINE
            last = (offset + n - 1) // LINE
            if first == last:
                self.dirty.add(first)
            else:
                self.dirty.update(range(first, last + 1))
            self.stats.payload_bytes += n if payload is None else payload
            self.stats.store_count += 1

    def atomic_store_8(self, offset, word):
        if offset % 8:
            raise Misaligned(f"offset {offset} is not 8-byte aligned")
        if isinstance(word, int):
            word = _U64.pack(word)
        if len(word) != 8:
            raise ValueError("atomic_store_8 takes exactly 8 bytes")
        self.store(offset, word, payload=0)

    def flush(self, offset, length):
        self._bounds(offset, length)
        with self._lock:
            self._tick()
            self.stats.flush_count += 1
            if self.eadr or length == 0:
                return
            first = offset // LINE
            if first == (offset + length - 1) // LINE:
                if first in self.dirty:
                    self.dirty.discard(first)
                    base = first * LINE
                    self.pending[first] = bytes(self.working[base:base + LINE])
                    self.stats.media_bytes += LINE
                    self.stats.media_bytes_256 += XPLINE
                return
            blocks = set()
            for line in range(offset // LINE, (offset + length - 1) // LINE + 1):
                if line in self.dirty:
                    self.dirty.discard(line)
                    base = line * LINE
                    self.pending[line] = bytes(self.working[base:base + LINE])
                    self.stats.media_bytes += LINE
                    blocks.add(base // XPLINE)
            self.stats.media_bytes_256 += XPLINE * len(blocks)

    def fence(self):
        with self._lock:
            self._tick()
            self.stats.fence_count += 1
            if self.eadr:
                # caches are inside the persistence domain: everything dirty persists
                for line in self.dirty:
                    self.pending[line] = bytes(self.working[line * LINE:(line + 1) * LINE])
                    self.stats.media_bytes += LINE
                self.dirty.clear()
            durable = self.durable
            for line, data in self.pending.items():
                durable[line * LINE:(line + 1) * LINE] = data
            self.pending.clear()

    def persist(self, offset, data, payload=None):
        """store + flush + fence."""
        self.store(offset, data, payload)
        self.flush(offset, len(data))
        self.fence()

    # ------------------------------------------------------------------ reads
    def load(self, offset, length):
        self._bounds(offset, length)
        return bytes(self.working[offset:offset + length])

    def read_u64(self, offset):
        return _U64.unpack_from(self.working, offset)[0]

    def durable_u64(self, offset):
        return _U64.unpack_from(self.durable, offset)[0]

    def header(self):
        return {
            "magic": bytes(self.working[0:8]),
            "version": self.read_u64(H_VERSION),
            "normal_shutdown": bool(self.read_u64(H_NORMAL_SHUTDOWN)),
            "active_edge_array": self.read_u64(H_ACTIVE_ARRAY),
            "capacity": self.read_u64(H_CAPACITY),
            "checkpoint": (self.read_u64(H_CKPT_OFF), self.read_u64(H_CKPT_LEN)),
            "undo": (self.read_u64(H_ULOG_OFF), self.read_u64(H_ULOG_COUNT), self.read_u64(H_ULOG_SZ)),
            "heap": (self.read_u64(H_HEAP_OFF), self.read_u64(H_HEAP_LEN)),
        }

    # ---------------------------------------------------------- crash support
    def crash_image(self, plan=STRICT, event=None):
        """The durable image a power failure right now would leave behind."""
        if not self.pending or not (plan.permissive or plan.torn_writes):
            return bytes(self.durable)
        image = bytearray(self.durable)
        if plan.torn_writes:
            rng = random.Random(f"{plan.seed}:{self.event_counter if event is None else event}")
            for line in sorted(self.pending):
                data = self.pending[line]
                base = line * LINE
                for w in range(0, LINE, 8):
                    if rng.random() < 0.5:
                        image[base + w:base + w + 8] = data[w:w + 8]
        else:
            for line, data in self.pending.items():
                image[line * LINE:(line + 1) * LINE] = data
        return bytes(image)

    def _crash_now(self, plan, event=None):
        self.durable = bytearray(self.crash_image(plan, event))
        self.dirty.clear()
        self.pending.clear()
        self._trip = None
        self.crashed = True

    def arm(self, plan):
        """Crash (and raise SimulatedCrash) just before event ``plan.event``."""
        self._trip = plan.event
        self._trip_plan = plan

    def disarm(self):
        self._trip = None

    def crash(self, plan=STRICT):
        """Lose power immediately; the region must be reopened afterwards."""
        with self._lock:
            self._crash_now(plan)

    def reopen(self):
        """Reboot after :meth:`crash`: working image reloaded from durable."""
        with self._lock:
            self.working[:] = self.durable
            self.dirty.clear()
            self.pending.clear()
            self.event_counter = 0
            self._trip = None
            self.crashed = False
        self.sync()
        return self

    def close(self):
        self.sync()
