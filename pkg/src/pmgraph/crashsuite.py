"""Crash-point enumeration against an acknowledged-prefix oracle.

The scripted workload runs once, single-threaded.  Before every emulator
event the observer materializes the image a power failure at that instant
would leave, recovers a fresh graph from it and checks the recovered item
sequences: each must be a prefix of the vertex's full script sequence, and
the per-vertex lengths must equal the acknowledged counts, except that the
single in-flight operation may also be present.
"""

from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass, field

import numpy as np

from .encoding import TOMB
from .errors import PmGraphError
from .pm_region import CrashPlan, PmRegion
from .store import Graph, GraphConfig


def small_config(**kw):
    """Tiny geometry so a few thousand edges exercise every maintenance path."""
    base = dict(init_vertices=8, init_edges=96, seg_slots=32, elog_sz=240, ulog_sz=256,
                max_writers=2, concurrent=False)
    base.update(kw)
    return GraphConfig(**base)


@dataclass
class CrashSuiteConfig:
    edges: int = 2000
    vertices: int = 48
    seed: int = 7
    delete_fraction: float = 0.05
    capacity: int = 1 << 19
    graph: GraphConfig = field(default_factory=small_config)


def scripted_workload(cfg):
    """[(src, word)] with a skewed source distribution (hub vertices overflow their runs)."""
    rng = random.Random(cfg.seed)
    ops = []
    inserted = []
    for _ in range(cfg.edges):
        if inserted and rng.random() < cfg.delete_fraction:
            s, d = inserted[rng.randrange(len(inserted))]
            ops.append((s, TOMB | d))
            continue
        s = min(cfg.vertices - 1, int(rng.paretovariate(1.1)) - 1)
        if rng.random() < 0.3:
            s = rng.randrange(cfg.vertices)
        d = rng.randrange(cfg.vertices)
        ops.append((s, d))
        inserted.append((s, d))
    return ops


@dataclass
class CrashReport:
    mode: str
    events: int = 0
    points: int = 0
    distinct_images: int = 0
    passed: int = 0
    failures: list = field(default_factory=list)
    rebalances: int = 0
    merges: int = 0
    resizes: int = 0
    chunks: int = 0
    moved_bytes: int = 0
    durable_bytes: int = 0
    undo_restores: int = 0
    rebuilds: int = 0
    elapsed: float = 0.0

    @property
    def ok(self):
        return not self.failures and self.passed == self.points

    @property
    def first_failure(self):
        return self.failures[0] if self.failures else None

    def summary(self):
        return (f"{self.mode}: {self.passed}/{self.points} PASS over {self.events} events "
                f"({self.distinct_images} distinct images); rebalances={self.rebalances} "
                f"merges={self.merges} resizes={self.resizes} undo_restores={self.undo_restores}")


def recovered_items(image, config=None):
    region = PmRegion.from_image(image)
    was_normal = region.mark_running()
    g, report = Graph.recover(region, was_normal, config or small_config())
    g.check_invariants()
    items = {v: g.all_items(v) for v in g.ids}
    return items, report


def check_prefix(items, full, srcs, k):
    """None when ``items`` equals the k-op prefix (or k+1 with the in-flight op); else a reason."""
    for v, seq in items.items():
        ref = full.get(v, ())
        if len(seq) > len(ref) or list(ref[:len(seq)]) != seq:
            return f"vertex {v}: recovered sequence is not a prefix of its acknowledged order"
    n = len(srcs)
    counts = np.bincount(srcs[:k], minlength=1 + int(srcs.max(initial=0)))
    extra_v = int(srcs[k]) if k < n else None
    total = sum(len(s) for s in items.values())
    if total not in (k, k + 1):
        return f"recovered {total} items, acknowledged {k}"
    for v, c in enumerate(counts):
        got = len(items.get(v, ()))
        if got == c or (got == c + 1 and v == extra_v and total == k + 1):
            continue
        return f"vertex {v}: recovered {got} items, acknowledged {c}"
    return None


def run_crash_suite(cfg=None, plan=None, points=None, sample_seed=0):
    """Enumerate crash points (all events, or ``points`` sampled ones)."""
    cfg = cfg or CrashSuiteConfig()
    plan = plan or CrashPlan.exhaustive()
    ops = scripted_workload(cfg)
    srcs = np.array([s for s, _ in ops], dtype=np.int64)
    full = {}
    for s, w in ops:
        full.setdefault(s, []).append(w)
    mode = "torn" if plan.torn_writes else ("permissive" if plan.permissive else "strict")
    report = CrashReport(mode)
    t0 = time.perf_counter()

    def fresh():
        region = PmRegion.create(None, cfg.capacity)
        return region, Graph.init(region, cfg.graph)

    chosen = None
    if points is not None:
        region, g = fresh()
        first = region.event_counter
        for s, w in ops:
            g._append(s, w)
        total = region.event_counter
        rng = random.Random(sample_seed)
        chosen = set(rng.sample(range(first, total), min(points, total - first)))

    region, g = fresh()
    state = {"acked": 0, "last": None}
    cache = {}
    restores = set()

    def observer(reg, n):
        if chosen is not None and n not in chosen:
            return
        st = reg.stats
        torn = plan.torn_writes and reg.pending
        key = (st.flush_count, st.fence_count, n if torn else None)
        k = state["acked"]
        if key == state["last"] and chosen is None:
            res = cache[state["hash"]]
        else:
            image = reg.crash_image(plan, n)
            h = hashlib.blake2b(image, digest_size=16).digest()
            state["last"], state["hash"] = key, h
            res = cache.get(h)
            if res is None:
                try:
                    items, rep = recovered_items(image, cfg.graph)
                    res = (items, rep.undo_restores, rep.resumed_rebalances, None)
                except (PmGraphError, AssertionError) as exc:
                    res = (None, 0, 0, f"recovery failed: {type(exc).__name__}: {exc}")
                cache[h] = res
        items, und, reb, err = res
        report.points += 1
        if err is None:
            err = check_prefix(items, full, srcs, k)
            if und:
                restores.add(state["hash"])
            if reb:
                report.rebuilds += 1
        if err is None:
            report.passed += 1
        elif len(report.failures) < 20:
            report.failures.append((n, k, err))

    region.observer = observer
    for s, w in ops:
        g._append(s, w)
        state["acked"] += 1
    region.observer = None
    report.events = region.event_counter
    report.distinct_images = len(cache)
    report.undo_restores = len(restores)
    report.rebalances = g.counters.rebalances
    report.merges = g.counters.merges
    report.resizes = g.counters.resizes
    report.chunks = g.journal.chunks
    report.moved_bytes = g.journal.moved_bytes
    report.durable_bytes = g.journal.durable_bytes
    report.elapsed = time.perf_counter() - t0
    report.graph = g
    return report
