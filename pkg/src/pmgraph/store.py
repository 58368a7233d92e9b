"""The dynamic graph: volatile vertex array over a persistent PMA edge array.

Per vertex the volatile side keeps ``deg`` (items appended, tombstones
included), ``alen`` (items resident in the array run), ``start`` (pivot
slot, -1 when absent) and ``elog`` (index of the newest entry in the
section log, NULL when none).  Everything volatile is updated only after the
matching persistent write has been fenced.
"""

from __future__ import annotations

import bisect
import struct
import threading
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import durability
from .encoding import ENTRY, GAP, MAX_VERTEX, NULL, PAYLOAD_MASK, PIVOT, TOMB
from .errors import BadConfig, IdOverflow, Overflow, UnknownVertex
from .layout import ULOG_HEADER, ArrayGeometry, Heap, UndoLog, align, init_undo_area, write_fresh_array
from .locks import NullLock, RWLock, SectionLock, acquire_ascending, release_all
from .pm_region import H_ACTIVE_ARRAY, H_HEAP_LEN, H_HEAP_OFF, PmRegion
from .pma import DEFAULT_THRESHOLDS, RESIZE, DensityTree, Thresholds, find_rebalance_range, plan_redistribution

_U32 = struct.Struct("<I")
_VT = struct.Struct("<IQI")

ABLATIONS = ("none", "no-el", "no-el-ul", "no-el-ul-dp")


@dataclass
class GraphConfig:
    init_vertices: int = 1024
    init_edges: int = 4096
    elog_sz: int = 2048
    ulog_sz: int = 2048
    seg_slots: int = 1024
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    max_writers: int = 16
    edge_log: bool = True
    undo: str = "chunked"  # or "journal": one full-copy backup per operation
    vertex_array_in_pm: bool = False
    concurrent: bool = True
    merge_fraction: float = 0.9

    def validate(self):
        if self.elog_sz < 12:
            raise BadConfig("elog_sz must hold at least one 12-byte entry (disable logs via the ablation)")
        if self.seg_slots < 8 or self.seg_slots & (self.seg_slots - 1):
            raise BadConfig("seg_slots must be a power of two >= 8")
        if self.ulog_sz % 4 or self.ulog_sz < 32:
            raise BadConfig("ulog_sz must be a multiple of 4 and >= 32")
        if self.ulog_sz // 4 < self.elog_sz // 12 + 2:
            raise BadConfig("ulog_sz must cover a drained log plus two slots")
        if self.undo not in ("chunked", "journal"):
            raise BadConfig(f"unknown undo mode {self.undo!r}")
        if self.max_writers < 1 or self.init_vertices < 0 or self.init_edges < 0:
            raise BadConfig("sizes must be non-negative and max_writers >= 1")
        return self

    @classmethod
    def ablation(cls, name, **kw):
        """Config for one of the write-path ablations (``none`` is the full design)."""
        if name not in ABLATIONS:
            raise BadConfig(f"unknown ablation {name!r}; choose from {ABLATIONS}")
        base = cls(**kw)
        if name == "none":
            return base
        base = replace(base, edge_log=False)
        if name in ("no-el-ul", "no-el-ul-dp"):
            base = replace(base, undo="journal")
        if name == "no-el-ul-dp":
            base = replace(base, vertex_array_in_pm=True)
        return base

    def initial_leaves(self):
        need = (self.init_edges + self.init_vertices) / self.thresholds.tau_root
        leaves = 1
        while leaves * self.seg_slots < need:
            leaves *= 2
        return leaves


@dataclass
class VertexEntry:
    degree: int
    start: int
    elog_head: int


@dataclass
class EngineStats:
    array_inserts: int = 0
    log_inserts: int = 0
    shifts: int = 0
    vertex_creations: int = 0
    rebalances: int = 0
    merges: int = 0
    resizes: int = 0


def live_filter(words):
    """Surviving live destinations: a tombstone cancels the earliest unmatched equal live item."""
    pending = {}
    cancelled = set()
    for i, w in enumerate(words):
        if w & TOMB:
            q = pending.get(w & PAYLOAD_MASK)
            if q:
                cancelled.add(q.popleft())
        else:
            pending.setdefault(w, deque()).append(i)
    if not cancelled:
        return [w for w in words if not w & TOMB]
    return [w for i, w in enumerate(words) if not w & TOMB and i not in cancelled]


class Snapshot:
    """Degree cache taken while writers were paused; immutable afterwards."""

    def __init__(self, graph, degrees, epoch):
        self.graph = graph
        self.degree_cache = tuple(degrees)
        self.epoch = epoch

    def _check(self, v):
        if not 0 <= v < len(self.degree_cache) or self.degree_cache[v] < 0:
            raise UnknownVertex(v)

    def items(self, v):
        """Pre-filter item words: exactly the first degree_cache[v] items of v."""
        self._check(v)
        return self.graph._read_items(v, self.degree_cache[v])

    def neighbors(self, v):
        return live_filter(self.items(v))

    def degree(self, v):
        return len(self.neighbors(v))

    def vertices(self):
        return [v for v, d in enumerate(self.degree_cache) if d >= 0]

    @property
    def n_vertices(self):
        return len(self.degree_cache)

    def to_csr(self):
        from .analytics import CSR

        return CSR.from_snapshot(self)


class Graph:
    def __init__(self, region, geom, thresholds, config, heap):
        self.region = region
        self.config = config
        self.thresholds = thresholds
        self.heap = heap
        self.journal = durability.JournalStats()
        self.counters = EngineStats()
        self.resize_media = 0
        self.epoch = 0
        c = config.concurrent
        self.glock = RWLock() if c else NullLock()
        self._mk_lock = SectionLock if c else NullLock
        self._ulog_lock = threading.Lock()
        self._tls = threading.local()
        self._next_ulog = 0
        off, count, sz = region.header()["undo"]
        stride = ULOG_HEADER + align(sz) + 64
        self.ulogs = [UndoLog(region, off + k * stride, sz, k) for k in range(count)]
        self._scratch = None
        self._vtab = None
        self._adopt_geometry(geom)
        self.deg, self.alen, self.start, self.elog, self.ids = [], [], [], [], []

    # ----------------------------------------------------------- construction
    @classmethod
    def init(cls, region, config=None):
        config = (config or GraphConfig()).validate()
        region.mark_running()
        heap_off = init_undo_area(region, config.max_writers, config.ulog_sz)
        heap = Heap(heap_off, region.capacity)
        slots = config.initial_leaves() * config.seg_slots
        size = ArrayGeometry.block_size(slots, config.seg_slots, config.elog_sz)
        geom = ArrayGeometry(heap.place(size), slots, config.seg_slots, config.elog_sz)
        write_fresh_array(region, geom, config.thresholds)
        region.atomic_store_8(H_ACTIVE_ARRAY, geom.base)
        region.flush(H_ACTIVE_ARRAY, 8)
        region.fence()
        g = cls(region, geom, config.thresholds, config, heap)
        g._install([], [], [], [], [0] * geom.n_sections, [0] * geom.n_sections)
        return g

    @classmethod
    def create(cls, path, capacity, config=None):
        return cls.init(PmRegion.create(path, capacity), config)

    @classmethod
    def recover(cls, region, was_normal, config=None):
        """(graph, RecoveryReport) for an opened region."""
        hdr = region.header()
        heap = Heap(hdr["heap"][0], hdr["heap"][0] + hdr["heap"][1])

        def factory(geom, thresholds):
            cfg = replace(config or GraphConfig(), seg_slots=geom.seg_slots, elog_sz=geom.elog_sz,
                          ulog_sz=hdr["undo"][2], max_writers=hdr["undo"][1], thresholds=thresholds)
            return cls(region, geom, thresholds, cfg, heap)

        return durability.boot(region, was_normal, factory)

    @classmethod
    def open(cls, path, config=None):
        region, was_normal = PmRegion.open(path)
        return cls.recover(region, was_normal, config)

    def _adopt_geometry(self, geom):
        self.geom = geom
        self.seg = geom.seg_slots
        self.b = geom.slots_off // 4
        self.u32 = self.region.u32
        self.log_cap = geom.log_capacity
        self.merge_at = max(1, -(-int(self.config.merge_fraction * 1000) * self.log_cap // 1000))
        self.locks = [self._mk_lock() for _ in range(geom.n_sections)]
        self._leaf_limit = self.thresholds.tau_leaf * geom.seg_slots
        self._vtab_on = self.config.vertex_array_in_pm

    def _install(self, deg, alen, start, elog, occ, tails):
        self.deg, self.alen, self.start, self.elog = list(deg), list(alen), list(start), list(elog)
        self.ids = [v for v, s in enumerate(self.start) if s >= 0]
        self.tails = list(tails)
        self.tree = DensityTree.from_counts(list(occ), list(tails), self.seg)

    def _install_from_runs(self, placements, runs, words):
        n = 1 + max((p.vertex for p in placements), default=-1)
        n = max(n, len(self.start))
        deg, alen, start, elog = [0] * n, [0] * n, [-1] * n, [NULL] * n
        for p, (v, items) in zip(placements, runs):
            deg[v] = alen[v] = len(items)
            start[v] = p.new_start
        seg = self.seg
        occ = [seg - words[i:i + seg].count(GAP) for i in range(0, len(words), seg)]
        self._install(deg, alen, start, elog, occ, [0] * self.geom.n_sections)
        self._vtab_bulk(v for v, _ in runs)

    def live_blocks(self):
        out = []
        if self._scratch:
            out.append((self._scratch[0], self._scratch[0] + self._scratch[1]))
        if self._vtab:
            out.append((self._vtab[0], self._vtab[0] + 16 * self._vtab[1]))
        return out

    def _journal_block(self, nbytes):
        need = align(nbytes) + 128
        if self._scratch is None or self._scratch[1] < need:
            size = max(need, 2 * (self._scratch[1] if self._scratch else 0))
            avoid = [(self.geom.base, self.geom.end)]
            if self._vtab:
                avoid.append((self._vtab[0], self._vtab[0] + 16 * self._vtab[1]))
            self._scratch = (self.heap.place(size, avoid), size)
        return self._scratch[0]

    def _ulog(self):
        u = getattr(self._tls, "ulog", None)
        if u is None:
            with self._ulog_lock:
                if self._next_ulog >= len(self.ulogs):
                    raise BadConfig(f"more than {len(self.ulogs)} writer threads")
                u = self.ulogs[self._next_ulog]
                self._next_ulog += 1
            self._tls.ulog = u
        return u

    # -------------------------------------------------------- vertex table (ablation)
    def _vtab_write(self, vs):
        if not self.config.vertex_array_in_pm:
            return
        region = self.region
        n = len(self.start)
        if self._vtab is None or self._vtab[1] < n:
            cap = max(64, 2 * n)
            avoid = [(self.geom.base, self.geom.end)]
            if self._scratch:
                avoid.append((self._scratch[0], self._scratch[0] + self._scratch[1]))
            off = self.heap.place(16 * cap, avoid)
            self._vtab = (off, cap)
            vs = range(n)
        off = self._vtab[0]
        for v in vs:
            region.store(off + 16 * v, _VT.pack(self.deg[v], max(self.start[v], 0), self.elog[v]), payload=0)
            region.flush(off + 16 * v, 16)
        region.fence()

    def _vtab_bulk(self, vs):
        if self.config.vertex_array_in_pm:
            self._vtab_write(list(vs))

    # ---------------------------------------------------------------- queries
    def exists(self, v):
        return 0 <= v < len(self.start) and self.start[v] >= 0

    def vertex_entry(self, v):
        if not self.exists(v):
            raise UnknownVertex(v)
        return VertexEntry(self.deg[v], self.start[v], self.elog[v])

    @property
    def n_vertices(self):
        return len(self.ids)

    @property
    def n_items(self):
        return sum(self.deg)

    def consistent_view(self):
        with self.glock.write():
            self.epoch += 1
            degs = [d if s >= 0 else -1 for d, s in zip(self.deg, self.start)]
            return Snapshot(self, degs, self.epoch)

    def _read_items(self, v, k):
        with self.glock.read():
            while True:
                st = self.start[v]
                lk = self.locks[st // self.seg]
                lk.acquire_read()
                if self.start[v] == st:
                    break
                lk.release_read()
            try:
                a = min(k, self.alen[v])
                b = self.b + st + 1
                words = self.u32[b:b + a].tolist()
                rest = k - a
                if rest > 0:
                    words.extend(self._log_prefix(st // self.seg, self.elog[v], rest))
                return words
            finally:
                lk.release_read()

    def _log_prefix(self, s, head, rest):
        ring = deque(maxlen=rest)
        buf = self.region.working
        base = self.geom.entry_off(s, 0)
        idx = head
        while idx != NULL:
            _, word, back = ENTRY.unpack_from(buf, base + 12 * idx)
            ring.append(word)
            idx = back
        out = list(ring)
        out.reverse()
        return out

    def all_items(self, v):
        """Every item of v currently stored (array run then log chain)."""
        return self._read_items(v, self.deg[v])

    # --------------------------------------------------------------- updates
    def insert_vertex(self, v):
        if not 0 <= v <= MAX_VERTEX:
            raise IdOverflow(f"vertex id {v} exceeds {MAX_VERTEX}")
        if self.exists(v):
            return
        need_resize = False
        with self.glock.write():
            while not self.exists(v):
                if need_resize:
                    self._resize_locked(extra=1)
                    need_resize = False
                    continue
                placed = self._place_vertex(v)
                if placed is RESIZE:
                    need_resize = True
                elif placed is not None and self.tree.leaf_density(placed) > self.thresholds.tau_leaf:
                    if self._rebalance(placed) is RESIZE:
                        self._resize_locked()

    def _pick_slot(self):
        """(slot, leaf) for a new pivot: middle of the widest gap run in the emptiest leaf."""
        if not self.ids:
            return 0, 0
        tree = self.tree
        occ, logocc = tree.occ, tree.logocc
        node = 1
        while node < tree.n_leaves:
            left = 2 * node
            node = left if occ[left] + logocc[left] <= occ[left + 1] + logocc[left + 1] else left + 1
        leaf = node - tree.n_leaves
        seg = self.seg
        words = np.frombuffer(self.region.working, dtype=np.uint32, count=seg,
                              offset=self.geom.slot_off(leaf * seg))
        gap = np.concatenate(([0], (words == GAP).view(np.int8), [0]))
        edges = np.diff(gap)
        starts = np.flatnonzero(edges == 1)
        if not starts.size:
            return None, leaf
        lengths = np.flatnonzero(edges == -1) - starts
        k = int(np.argmax(lengths))
        return leaf * seg + int(starts[k]) + int(lengths[k]) // 2, leaf

    def _place_vertex(self, v):
        """Try to write v's pivot; returns its leaf, RESIZE, or None after a rebalance."""
        seg = self.seg
        slot, leaf = self._pick_slot()
        if slot is None:
            res = self._rebalance(leaf, extra=1)
            return RESIZE if res is RESIZE else None
        off = self.geom.slot_off(slot)
        self.region.store(off, _U32.pack(PIVOT | v), payload=0)
        self.region.flush(off, 4)
        self.region.fence()
        n = len(self.start)
        if v >= n:
            grow = v + 1 - n
            self.deg.extend([0] * grow)
            self.alen.extend([0] * grow)
            self.start.extend([-1] * grow)
            self.elog.extend([NULL] * grow)
        self.deg[v] = self.alen[v] = 0
        self.elog[v] = NULL
        self.start[v] = slot
        bisect.insort(self.ids, v)
        self.tree.add(slot // seg, 1)
        self.counters.vertex_creations += 1
        self._vtab_write([v])
        return slot // seg

    def insert_edge(self, src, dst):
        self._append(src, dst)

    def delete_edge(self, src, dst):
        self._append(src, TOMB | dst)

    def _append(self, src, word):
        if not 0 <= src <= MAX_VERTEX or not 0 <= (word & PAYLOAD_MASK) <= MAX_VERTEX:
            raise IdOverflow(f"vertex id out of range in ({src}, {word & PAYLOAD_MASK})")
        while True:
            if not self.exists(src):
                self.insert_vertex(src)
            glock = self.glock
            glock.acquire_read()
            try:
                done, follow = self._try_append(src, word)
                res = None
                if follow is not None:
                    res = self._rebalance(follow)
            finally:
                glock.release_read()
            if res is RESIZE:
                with self.glock.write():
                    self._resize_locked()
            if done:
                return

    def _try_append(self, src, word):
        seg = self.seg
        locks = self.locks
        while True:
            st = self.start[src]
            s = st // seg
            lk = locks[s]
            lk.wait_rebalance()
            lk.acquire_write()
            if self.start[src] == st:
                break
            lk.release_write()
        held = [s]
        region = self.region
        try:
            if self.elog[src] == NULL:
                slot = st + 1 + self.alen[src]
                t = slot // seg
                if t != s and slot < self.geom.slots and self.u32[self.b + slot] == GAP:
                    # the run already reaches into a later section: guard that one too
                    locks[t].acquire_write()
                    held.append(t)
                if (t == s or len(held) > 1) and self.u32[self.b + slot] == GAP:
                    off = 4 * (self.b + slot)
                    region.store(off, _U32.pack(word), payload=4)
                    region.flush(off, 4)
                    region.fence()
                    self.deg[src] += 1
                    self.alen[src] += 1
                    tree = self.tree
                    tree.add(t, 1)
                    self.counters.array_inserts += 1
                    if self._vtab_on:
                        self._vtab_write((src,))
                    node = tree.n_leaves + t
                    return True, (t if tree.occ[node] + tree.logocc[node] > self._leaf_limit else None)
                if len(held) > 1:
                    locks[held.pop()].release_write()
            if self.config.edge_log:
                return self._log_append(src, word, s)
            return self._shift_insert(src, word, st, s, held)
        finally:
            release_all(locks, held)

    def _log_append(self, src, word, s):
        tail = self.tails[s]
        if tail >= self.log_cap:
            return False, s
        region = self.region
        geom = self.geom
        off = geom.entry_off(s, tail)
        region.store(off, ENTRY.pack(src, word, self.elog[src]), payload=4)
        region.flush(off, 12)
        region.fence()
        toff = geom.tail_off(s)
        region.atomic_store_8(toff, tail + 1)
        region.flush(toff, 8)
        region.fence()
        self.tails[s] = tail + 1
        self.elog[src] = tail
        self.deg[src] += 1
        self.tree.add(s, 0, 1)
        self.counters.log_inserts += 1
        self._vtab_write((src,))
        # only when the log is what pushed the leaf over: a leaf whose array part is
        # already over tau is covered by an oversized run a rebalance cannot split
        node = self.tree.n_leaves + s
        occ = self.tree.occ[node]
        over = occ <= self._leaf_limit < occ + self.tree.logocc[node]
        return True, (s if over or tail + 1 >= self.merge_at else None)

    def _shift_insert(self, src, word, st, s, held):
        """Edge logs disabled: make room by shifting the next slots right by one."""
        seg = self.seg
        end = st + 1 + self.alen[src]
        C = self._ulog().capacity // 4 if self.config.undo == "chunked" else seg
        limit = min(self.geom.slots, end + C - 1)
        if end >= limit:
            return False, s
        gap = self._first_non_gap_word(end, limit)
        if gap is None:
            return False, s
        extra = [t for t in range(s + 1, gap // seg + 1)]
        acquire_ascending(self.locks, extra)
        held.extend(extra)
        region = self.region
        if gap == end:
            off = self.geom.slot_off(end)
            region.store(off, _U32.pack(word), payload=4)
            region.flush(off, 4)
            region.fence()
            self.counters.array_inserts += 1
        else:
            shifted = durability.execute_shift(self, end, gap, word, self._ulog())
            region.stats.payload_bytes += 4
            moved = []
            for w in shifted:
                if w >= PIVOT:
                    u = w & PAYLOAD_MASK
                    self.start[u] += 1
                    moved.append(u)
            self.counters.shifts += 1
            self._vtab_write(moved)
        self.deg[src] += 1
        self.alen[src] += 1
        leaf = gap // seg
        self.tree.add(leaf, 1)
        self._vtab_write((src,))
        return True, (leaf if self.tree.leaf_density(leaf) > self.thresholds.tau_leaf else None)

    def _first_non_gap_word(self, lo, hi):
        """First GAP slot in [lo, hi), or None."""
        u32, b = self.u32, self.b
        for i in range(lo, hi):
            if u32[b + i] == GAP:
                return i
        return None

    def merge_log(self, section):
        """Drain one section log into the array now (no-op for an empty log)."""
        if not self.tails[section]:
            return
        with self.glock.read():
            res = self._rebalance(section)
        if res is RESIZE:
            with self.glock.write():
                self._resize_locked()

    def rebalance(self, leaf):
        with self.glock.read():
            res = self._rebalance(leaf)
        if res is RESIZE:
            with self.glock.write():
                self._resize_locked()

    # ------------------------------------------------------------- maintenance
    def _rebalance(self, leaf, extra=0):
        seg = self.seg
        origin = self.locks[leaf]
        origin.begin_rebalance()
        try:
            cap_depth = None
            h = self.tree.height
            while True:
                rng = find_rebalance_range(leaf, self.tree, self.thresholds, extra, cap_depth)
                if rng is RESIZE:
                    return RESIZE
                lo, hi = rng
                secs = list(range(lo // seg, hi // seg))
                acquire_ascending(self.locks, secs)
                held = list(secs)
                try:
                    u32, b, slots = self.u32, self.b, self.geom.slots
                    lo2 = lo
                    while lo2 < hi and u32[b + lo2] < PIVOT:
                        lo2 += 1
                    hi2 = hi
                    while hi2 < slots and u32[b + hi2] < PIVOT:
                        hi2 += 1
                    if hi2 > hi:
                        more = list(range(hi // seg, (hi2 - 1) // seg + 1))
                        acquire_ascending(self.locks, more)
                        held.extend(more)
                    placements = self._collect(lo2, hi2, secs)
                    try:
                        plan_redistribution(lo2, hi2, placements)
                    except Overflow:
                        depth = h - ((hi - lo) // seg).bit_length() + 1
                        if depth <= 0:
                            return RESIZE
                        cap_depth = depth - 1
                        continue
                    self._apply(lo2, hi2, placements, secs)
                    return None
                finally:
                    release_all(self.locks, held)
        finally:
            origin.end_rebalance()

    def _collect(self, lo, hi, secs):
        words = self.u32[self.b + lo:self.b + hi].tolist()
        placements = []
        by_v = {}
        i, n = 0, len(words)
        alen = self.alen
        from .pma import Placement

        while i < n:
            w = words[i]
            if w == GAP:
                i += 1
                continue
            v = w & PAYLOAD_MASK
            p = Placement(v, lo + i, 1 + alen[v])
            placements.append(p)
            by_v[v] = p
            i += p.array_len
        buf = self.region.working
        for s in secs:
            t = self.tails[s]
            if t:
                base = self.geom.entry_off(s, 0)
                for k in range(t):
                    src, word, _ = ENTRY.unpack_from(buf, base + 12 * k)
                    by_v[src].log_items.append(word)
        return placements

    def _apply(self, lo, hi, placements, secs):
        drained = (secs[0], secs[-1] + 1) if secs else None
        merging = bool(secs) and any(self.tails[s] for s in secs)
        durability.execute_rebalance(self, lo, hi, placements, drained, self._ulog())
        for p in placements:
            v = p.vertex
            self.start[v] = p.new_start
            self.alen[v] = p.array_len - 1 + len(p.log_items)
            self.elog[v] = NULL
        for s in secs:
            self.tails[s] = 0
        seg = self.seg
        u32, b = self.u32, self.b
        first = min([lo // seg] + secs)
        last = max([(hi - 1) // seg if hi > lo else first] + secs)
        for leaf in range(first, last + 1):
            base = b + leaf * seg
            occ = seg - u32[base:base + seg].tolist().count(GAP)
            self.tree.set_leaf(leaf, occ, self.tails[leaf])
        self.counters.rebalances += 1
        if merging:
            self.counters.merges += 1
        self._vtab_bulk(p.vertex for p in placements)

    def _logical_runs(self):
        """[(vertex, item words)] in array order with logs folded in."""
        order = sorted(self.ids, key=self.start.__getitem__)
        u32, b = self.u32, self.b
        logs = {}
        buf = self.region.working
        for s, t in enumerate(self.tails):
            base = self.geom.entry_off(s, 0)
            for k in range(t):
                src, word, _ = ENTRY.unpack_from(buf, base + 12 * k)
                logs.setdefault(src, []).append(word)
        runs = []
        for v in order:
            st = self.start[v] + 1
            items = u32[b + st:b + st + self.alen[v]].tolist()
            if v in logs:
                items.extend(logs[v])
            runs.append((v, items))
        return runs

    def _resize_locked(self, extra=0):
        """Copy-on-write resize; caller holds the global lock exclusively."""
        runs = self._logical_runs()
        total = sum(1 + len(items) for _, items in runs) + extra
        slots = 2 * self.geom.slots
        while total / slots > self.thresholds.tau_root or total + len(runs) + extra > slots:
            slots *= 2
        geom, words, placements = durability.execute_resize(self, slots, runs, self.live_blocks())
        self._adopt_geometry(geom)
        self._install_from_runs(placements, runs, words)
        self.counters.resizes += 1

    def resize(self):
        with self.glock.write():
            self._resize_locked()

    def _finish_pending(self):
        """Re-run maintenance whose trigger holds after recovery; returns how many ran."""
        n = 0
        for s, t in enumerate(self.tails):
            if t >= self.merge_at:
                if self._rebalance(s) is RESIZE:
                    self._resize_locked()
                n += 1
        if self.tree.node_density(1) > self.thresholds.tau_root:
            self._resize_locked()
            n += 1
        return n

    def shutdown(self):
        with self.glock.write():
            durability.shutdown(self)

    # ---------------------------------------------------------------- checking
    def check_invariants(self):
        """Assert volatile state matches the persistent layout (test helper)."""
        self.tree.check()
        b, seg = self.b, self.seg
        words = self.u32[b:b + self.geom.slots].tolist()
        dec = durability.decode_array(words, seg)
        assert dec.canonical, "non-canonical layout while running"
        assert dec.occ == [self.tree.leaf_occ(i) for i in range(self.tree.n_leaves)]
        assert [self.tree.leaf_log(i) for i in range(self.tree.n_leaves)] == self.tails
        assert sorted(dec.by_vertex) == self.ids
        for v in self.ids:
            r = dec.by_vertex[v]
            assert r.start == self.start[v], (v, r.start, self.start[v])
            assert len(r.items) == self.alen[v], (v, len(r.items), self.alen[v])
        for s, t in enumerate(self.tails):
            assert self.region.read_u64(self.geom.tail_off(s)) == t
        return True
