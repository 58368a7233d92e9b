"""Crash-consistent data movement, shutdown checkpoints and recovery.

Rebalancing moves data in chunks of at most ``ULOG_SZ`` bytes.  Each chunk
is one transition between two decodable array states: the bytes about to be
overwritten are backed up in the writer's undo log (payload + header, one
fence), then overwritten (one fence).  A chunk's backup stays valid until
the next chunk's header replaces it, so restoring it after a crash always
lands on the state before that chunk, which is itself decodable.

Draining section logs into the array is the one step whose intermediate
states would double count items, so it runs in phases:

* stage the log items one slot past the run (invisible: they follow a gap);
* flip the pivot to MERGED: from here the staged items count and the
  vertex's log entries are ignored;
* zero the drained log tails;
* close the one-slot hole and flip the pivot back.

Runs too long for one chunk are moved by peeling: a temporary continuation
pivot (same vertex id) marks where the already-moved part resumes.

Recovery decodes whatever layout it finds.  Non-canonical leftovers of an
interrupted rebalance (continuation pivots, MERGED pivots, orphan items, log
entries stranded in a foreign section) are finished by rebuilding the array
copy-on-write into a fresh block and flipping the header word atomically.
"""

from __future__ import annotations

import struct
import time
from collections import defaultdict
from dataclasses import dataclass, field

from .encoding import ENTRY, GAP, MERGED, NULL, PAYLOAD_MASK, PIVOT, TAG_MASK
from .errors import CheckpointAreaTooSmall, CorruptRegion
from .layout import ArrayGeometry, Heap, align, read_undo, write_fresh_array
from .pm_region import H_ACTIVE_ARRAY, H_CKPT_LEN, H_CKPT_OFF, H_NORMAL_SHUTDOWN
from .pma import Placement, plan_redistribution

CKPT_MAGIC = b"DGAPCKPT"
CKPT_VERSION = 1
CKPT_HEAD = struct.Struct("<8sQQQQ")  # magic, version, array base, vertex slots, leaves
CKPT_ENTRY = struct.Struct("<IQI")  # degree, start, elog_head: 16 bytes
NO_START = (1 << 64) - 1
SLACK = 16  # slots of unchanged data worth rewriting to save a chunk


@dataclass
class RecoveryReport:
    vertices_rebuilt: int = 0
    edges_scanned: int = 0
    undo_restores: int = 0
    log_entries_relinked: int = 0
    resumed_rebalances: int = 0
    elapsed: float = 0.0
    normal_shutdown: bool = False

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in vars(self).items())

    @classmethod
    def from_text(cls, text):
        out = cls()
        for line in text.strip().splitlines():
            k, v = line.split("=", 1)
            cur = getattr(out, k)
            setattr(out, k, type(cur)(v == "True") if isinstance(cur, bool) else type(cur)(v))
        return out


@dataclass
class JournalStats:
    """Media accounting for execute_rebalance (bytes are cache-line granular)."""

    rebalances: int = 0
    chunks: int = 0
    moved_bytes: int = 0
    durable_bytes: int = 0
    moved_slots: int = 0

    def within_bound(self, header=64):
        return self.durable_bytes <= 2 * self.moved_bytes + self.chunks * header


# ------------------------------------------------------------------- decoding

@dataclass
class Run:
    vertex: int
    start: int
    items: list = field(default_factory=list)
    merged: bool = False
    end: int = 0


@dataclass
class Decoded:
    runs: list
    by_vertex: dict
    occ: list
    orphans: int = 0
    continuations: int = 0
    staged: int = 0
    scanned: int = 0

    @property
    def canonical(self):
        return not (self.orphans or self.continuations or self.staged
                    or any(r.merged for r in self.runs))


def decode_array(words, seg_slots):
    """One sequential pass turning slot words into pivot-delimited runs.

    Tolerates the transient shapes a rebalance can leave behind; raises
    CorruptRegion on anything no protocol step produces.
    """
    runs = []
    by_vertex = {}
    occ = [0] * (len(words) // seg_slots)
    cur = None
    open_ = False
    gaps = 0
    hole_used = False
    orphans = conts = staged = 0
    i = 0
    for w in words:
        if w == GAP:
            gaps += 1
            i += 1
            continue
        occ[i // seg_slots] += 1
        if w >= PIVOT:
            v = w & PAYLOAD_MASK
            is_merged = (w & TAG_MASK) == MERGED
            if cur is not None and cur.vertex == v and not is_merged and not cur.merged:
                conts += 1
                open_ = True
            else:
                if v in by_vertex:
                    raise CorruptRegion(f"vertex {v} has two runs (slots {by_vertex[v].start}, {i})")
                cur = Run(v, i, [], is_merged, i + 1)
                runs.append(cur)
                by_vertex[v] = cur
                open_ = True
                hole_used = False
            gaps = 0
        elif cur is not None and open_ and gaps == 0:
            cur.items.append(w)
            cur.end = i + 1
        elif cur is not None and open_ and cur.merged and gaps == 1 and not hole_used:
            hole_used = True
            staged += 1
            cur.items.append(w)
            cur.end = i + 1
            gaps = 0
        else:
            orphans += 1
            open_ = False
            gaps = 0
        i += 1
    return Decoded(runs, by_vertex, occ, orphans, conts, staged, len(words))


def read_logs(buf, geom):
    """Durable entries [0, tail) of every section log: {section: [(src, word, back)]}."""
    out = {}
    cap = geom.log_capacity
    for s in range(geom.n_sections):
        tail = struct.unpack_from("<Q", buf, geom.tail_off(s))[0]
        if tail > cap:
            raise CorruptRegion(f"section {s} log tail {tail} exceeds capacity {cap}")
        if tail:
            base = geom.entry_off(s, 0)
            out[s] = [ENTRY.unpack_from(buf, base + 12 * k) for k in range(tail)]
    return out


# ------------------------------------------------------------ chunked movement

class ChunkWriter:
    """Batches transitions of the slot window [lo, hi) into undo-protected chunks."""

    def __init__(self, g, ulog, lo, hi, journal_base=None, limit=None):
        self.g = g
        self.region = g.region
        self.ulog = ulog
        self.lo = lo
        self.hi = hi
        b = g.geom.slots_off // 4
        self.cur = list(self.region.u32[b + lo:b + hi])
        self.limit = limit if limit is not None else ulog.capacity // 4
        self.journal_base = journal_base
        self.pa = self.pb = None
        self.moved_bytes = 0
        self.moved_slots = 0

    def apply(self, a, words):
        b = a + len(words)
        if self.pa is not None:
            union = max(b, self.pb) - min(a, self.pa)
            # batch only transitions that touch or nearly touch the pending span
            if union > self.limit or union > (self.pb - self.pa) + (b - a) + SLACK:
                self.flush()
        self.cur[a - self.lo:b - self.lo] = words
        self.moved_slots += len(words)
        if self.pa is None:
            self.pa, self.pb = a, b
        else:
            self.pa, self.pb = min(a, self.pa), max(b, self.pb)

    def flush(self):
        if self.pa is None:
            return
        a, b = self.pa, self.pb
        self.pa = self.pb = None
        new = self.cur[a - self.lo:b - self.lo]
        old = self.region.u32[self.g.b + a:self.g.b + b].tolist()
        i, j = 0, len(new)
        while i < j and new[i] == old[i]:
            i += 1
        while j > i and new[j - 1] == old[j - 1]:
            j -= 1
        if i < j:
            self.write_chunk(self.g.geom.slot_off(a + i), struct.pack(f"<{j - i}I", *new[i:j]))

    def write_chunk(self, dest, new):
        region = self.region
        old = region.load(dest, len(new))
        if old == new:
            return
        self.ulog.publish(dest, old, self.journal_base)
        before = region.stats.media_bytes
        region.store(dest, new, payload=0)
        region.flush(dest, len(new))
        region.fence()
        self.moved_bytes += region.stats.media_bytes - before

    def words(self, a, b):
        return self.cur[a - self.lo:b - self.lo]


def _window_clear(cw, a, b, own_lo, own_hi):
    cur, lo = cw.cur, cw.lo
    for i in range(a, b):
        if (i < own_lo or i >= own_hi) and cur[i - lo] != GAP:
            return False
    return True


def _move_run(cw, p):
    """Relocate p's array run (pivot + array items) from old_start to new_start."""
    s, ns, L = p.old_start, p.new_start, p.array_len
    run = cw.words(s, s + L)
    C = cw.limit
    if max(s, ns) + L - min(s, ns) <= C:
        a = min(s, ns)
        new = [GAP] * (max(s, ns) + L - a)
        new[ns - a:ns - a + L] = run
        cw.apply(a, new)
        return
    piv = run[0]
    while s != ns:
        d = min(abs(ns - s), max(1, C // 2))
        k = C - d - 1
        if ns > s:
            j = L - 1
            while True:
                j2 = max(0, j - k)
                if j2 > 0:
                    a = s + j2 + 1
                    new = [GAP] * (d - 1) + [piv] + run[j2 + 1:j + 1]
                    cw.apply(a, new)
                    j = j2
                else:
                    cw.apply(s, [GAP] * d + [piv] + run[1:j + 1])
                    break
            s += d
        else:
            j = 0
            while True:
                j2 = min(L - 1, j + k)
                if j2 < L - 1:
                    if j == 0:
                        cw.apply(s - d, [piv] + run[1:j2 + 1] + [GAP] * (d - 1) + [piv])
                    else:
                        cw.apply(s - d + j + 1, run[j + 1:j2 + 1] + [GAP] * (d - 1) + [piv])
                    j = j2
                else:
                    if j == 0:
                        cw.apply(s - d, [piv] + run[1:] + [GAP] * d)
                    else:
                        cw.apply(s - d + j + 1, run[j + 1:] + [GAP] * d)
                    break
            s -= d


def _phase_moves(cw, placements):
    pending = [p for p in placements if p.old_start != p.new_start]
    forward = True
    while pending:
        progressed = False
        rest = []
        seq = pending if forward else reversed(pending)
        for p in seq:
            s, ns, L = p.old_start, p.new_start, p.array_len
            if _window_clear(cw, min(s, ns), max(s, ns) + L, s, s + L):
                _move_run(cw, p)
                progressed = True
            else:
                rest.append(p)
        if not forward:
            rest.reverse()
        if not progressed:
            raise CorruptRegion("rebalance move schedule is cyclic")
        pending = rest
        forward = not forward


def execute_rebalance(g, lo, hi, placements, drained, ulog):
    """Move the planned range into place and drain the logs of ``drained`` sections.

    ``placements`` carry old_start/array_len (current layout), log_items and
    the planned new_start/span.  Volatile state is not touched here.
    """
    region = g.region
    geom = g.geom
    stats = g.journal
    media0 = region.stats.media_bytes
    chunks0 = ulog.chunks
    journal_base = None
    limit = None
    if g.config.undo == "journal":
        journal_base = g._journal_block(4 * (hi - lo) + 8 * geom.n_sections)
        limit = hi - lo
    cw = ChunkWriter(g, ulog, lo, hi, journal_base, limit)

    _phase_moves(cw, placements)
    merging = [p for p in placements if p.log_items]
    for p in merging:
        e = p.new_start + p.array_len
        cw.apply(e + 1, list(p.log_items))
        cw.apply(p.new_start, [MERGED | p.vertex])
    cw.flush()

    if drained:
        s0, s1 = drained
        if any(g.tails[s] for s in range(s0, s1)):
            off = geom.tail_off(s0)
            n = 8 * (s1 - s0)
            step = max(8, (ulog.capacity if journal_base is None else n) // 8 * 8)
            for a in range(0, n, step):
                cw.write_chunk(off + a, bytes(min(step, n - a)))

    for p in merging:
        e = p.new_start + p.array_len
        cw.apply(e, list(p.log_items) + [GAP])
        cw.apply(p.new_start, [PIVOT | p.vertex])
    cw.flush()
    ulog.clear()

    stats.rebalances += 1
    stats.chunks += ulog.chunks - chunks0
    stats.moved_bytes += cw.moved_bytes
    stats.durable_bytes += region.stats.media_bytes - media0
    stats.moved_slots += cw.moved_slots
    return cw


def execute_shift(g, a, gap, word, ulog):
    """Nearby shift used when edge logs are disabled: slots [a, gap) move right by one."""
    region = g.region
    media0 = region.stats.media_bytes
    chunks0 = ulog.chunks
    journal_base = g._journal_block(4 * (gap + 1 - a)) if g.config.undo == "journal" else None
    cw = ChunkWriter(g, ulog, a, gap + 1, journal_base, gap + 1 - a)
    shifted = cw.words(a, gap)
    cw.apply(a, [word] + shifted)
    cw.flush()
    ulog.clear()
    st = g.journal
    st.chunks += ulog.chunks - chunks0
    st.moved_bytes += cw.moved_bytes
    st.durable_bytes += region.stats.media_bytes - media0
    st.moved_slots += cw.moved_slots
    return shifted


def build_array_words(slots, runs):
    """Lay ``runs`` = [(vertex, [item words])] out over a fresh array of ``slots``."""
    placements = [Placement(v, -1, 1 + len(items)) for v, items in runs]
    plan_redistribution(0, slots, placements)
    words = [GAP] * slots
    for p, (v, items) in zip(placements, runs):
        words[p.new_start] = PIVOT | v
        words[p.new_start + 1:p.new_start + 1 + len(items)] = items
    return words, placements


def execute_resize(g, new_slots, runs, avoid=()):
    """Copy-on-write the whole graph into a new block and flip the header to it."""
    region = g.region
    old = g.geom
    size = ArrayGeometry.block_size(new_slots, old.seg_slots, old.elog_sz)
    base = g.heap.place(size, avoid=[(old.base, old.end), *avoid])
    geom = ArrayGeometry(base, new_slots, old.seg_slots, old.elog_sz, old.generation + 1)
    words, placements = build_array_words(new_slots, runs)
    media0 = region.stats.media_bytes
    write_fresh_array(region, geom, g.thresholds, words)
    region.atomic_store_8(H_ACTIVE_ARRAY, base)
    region.flush(H_ACTIVE_ARRAY, 8)
    region.fence()
    g.journal.moved_slots += new_slots
    g.resize_media += region.stats.media_bytes - media0
    return geom, words, placements


# ------------------------------------------------------------ shutdown / boot

def shutdown(g):
    """Checkpoint the volatile vertex array and PMA counts, then mark clean."""
    region = g.region
    n = len(g.start)
    leaves = g.tree.n_leaves
    size = CKPT_HEAD.size + CKPT_ENTRY.size * n + 8 * leaves
    try:
        off = g.heap.place(size, avoid=[(g.geom.base, g.geom.end), *g.live_blocks()])
    except Exception as exc:
        raise CheckpointAreaTooSmall(str(exc)) from exc
    buf = bytearray(size)
    CKPT_HEAD.pack_into(buf, 0, CKPT_MAGIC, CKPT_VERSION, g.geom.base, n, leaves)
    pos = CKPT_HEAD.size
    for v in range(n):
        st = g.start[v]
        CKPT_ENTRY.pack_into(buf, pos, g.deg[v], NO_START if st < 0 else st, g.elog[v])
        pos += CKPT_ENTRY.size
    struct.pack_into(f"<{leaves}Q", buf, pos, *(g.tree.leaf_occ(i) for i in range(leaves)))
    region.store(off, bytes(buf), payload=0)
    region.store(H_CKPT_OFF, struct.pack("<QQ", off, size), payload=0)
    region.flush(off, size)
    region.flush(H_CKPT_OFF, 16)
    region.fence()
    region.atomic_store_8(H_NORMAL_SHUTDOWN, 1)
    region.flush(H_NORMAL_SHUTDOWN, 8)
    region.fence()
    region.sync()


def load_checkpoint(buf, geom):
    off, size = struct.unpack_from("<QQ", buf, H_CKPT_OFF)
    if off == 0 or off + size > len(buf):
        raise CorruptRegion("normal shutdown recorded without a checkpoint")
    magic, version, base, n, leaves = CKPT_HEAD.unpack_from(buf, off)
    if magic != CKPT_MAGIC or version != CKPT_VERSION or base != geom.base:
        raise CorruptRegion("checkpoint does not match the active edge array")
    deg, start, elog = [], [], []
    pos = off + CKPT_HEAD.size
    for _ in range(n):
        d, st, el = CKPT_ENTRY.unpack_from(buf, pos)
        pos += CKPT_ENTRY.size
        deg.append(d)
        start.append(-1 if st == NO_START else st)
        elog.append(el)
    occ = list(struct.unpack_from(f"<{leaves}Q", buf, pos))
    return deg, start, elog, occ


def restore_undo_logs(region, ulog_off, count, ulog_sz):
    from .layout import ULOG_HEADER

    restores = 0
    stride = ULOG_HEADER + align(ulog_sz) + 64
    for k in range(count):
        off = ulog_off + k * stride
        hit = read_undo(region.working, off)
        if hit is not None:
            dest, payload = hit
            region.store(dest, payload, payload=0)
            region.flush(dest, len(payload))
            region.fence()
            restores += 1
        if region.read_u64(off) or region.read_u64(off + 24):
            region.atomic_store_8(off, 0)
            region.atomic_store_8(off + 24, 0)
            region.flush(off, 32)
            region.fence()
    return restores


def logical_state(decoded, logs, geom):
    """Merge decoded runs with durable log entries.

    Returns (runs in array order as (vertex, array_items, log_items, log_index),
    relinked count, needs_rebuild).
    """
    needs_rebuild = not decoded.canonical
    per_vertex = defaultdict(list)
    relinked = 0
    for s, entries in logs.items():
        last = {}
        for idx, (src, word, back) in enumerate(entries):
            run = decoded.by_vertex.get(src)
            if run is None:
                raise CorruptRegion(f"log entry for vertex {src} without a pivot")
            if run.merged:
                continue
            if back != last.get(src, NULL):
                raise CorruptRegion(f"broken back-pointer chain for vertex {src} in section {s}")
            last[src] = idx
            per_vertex[src].append((s, idx, word))
            relinked += 1
    out = []
    for run in decoded.runs:
        entries = per_vertex.get(run.vertex, [])
        if entries and entries[0][0] != run.start // geom.seg_slots:
            needs_rebuild = True
        out.append((run.vertex, run.items, [w for _, _, w in entries],
                    entries[-1][1] if entries else NULL))
    return out, relinked, needs_rebuild


def boot(region, was_normal, factory):
    """Bring a graph up from an opened region.

    ``factory(geom, thresholds)`` returns an empty Graph bound to the region;
    this function fills its volatile state and returns (graph, report).
    """
    t0 = time.perf_counter()
    report = RecoveryReport(normal_shutdown=was_normal)
    buf = region.working
    base = region.read_u64(H_ACTIVE_ARRAY)
    if was_normal:
        geom, thresholds = ArrayGeometry.read(buf, base)
        g = factory(geom, thresholds)
        deg, start, elog, occ = load_checkpoint(buf, geom)
        logs = read_logs(buf, geom)
        logcount = defaultdict(int)
        for entries in logs.values():
            for src, _, _ in entries:
                logcount[src] += 1
        alen = [d - logcount[v] if st >= 0 else 0 for v, (d, st) in enumerate(zip(deg, start))]
        g._install(deg, alen, start, elog, occ, [len(logs.get(s, ())) for s in range(geom.n_sections)])
        report.vertices_rebuilt = sum(1 for st in start if st >= 0)
        report.elapsed = time.perf_counter() - t0
        return g, report

    hdr = region.header()
    ulog_off, ulog_count, ulog_sz = hdr["undo"]
    report.undo_restores = restore_undo_logs(region, ulog_off, ulog_count, ulog_sz)
    geom, thresholds = ArrayGeometry.read(buf, base)
    g = factory(geom, thresholds)
    b = geom.slots_off // 4
    words = list(region.u32[b:b + geom.slots])
    decoded = decode_array(words, geom.seg_slots)
    report.edges_scanned = decoded.scanned
    logs = read_logs(buf, geom)
    runs, relinked, needs_rebuild = logical_state(decoded, logs, geom)
    report.log_entries_relinked = relinked
    if needs_rebuild:
        total = sum(1 + len(a) + len(l) for _, a, l, _ in runs)
        slots = geom.slots
        while total + len(runs) > slots or total / slots > thresholds.tau_root:
            slots *= 2
        merged_runs = [(v, list(a) + list(l)) for v, a, l, _ in runs]
        geom, words, placements = execute_resize(g, slots, merged_runs)
        g._adopt_geometry(geom)
        g._install_from_runs(placements, merged_runs, words)
        report.resumed_rebalances += 1
    else:
        deg = []
        n = 1 + max((v for v, *_ in runs), default=-1)
        deg = [0] * n
        alen = [0] * n
        start = [-1] * n
        elog = [NULL] * n
        for (v, a, l, head), run in zip(runs, decoded.runs):
            deg[v] = len(a) + len(l)
            alen[v] = len(a)
            start[v] = run.start
            elog[v] = head
        g._install(deg, alen, start, elog, decoded.occ,
                   [len(logs.get(s, ())) for s in range(geom.n_sections)])
    report.vertices_rebuilt = len(runs)
    report.resumed_rebalances += g._finish_pending()
    report.elapsed = time.perf_counter() - t0
    return g, report
