"""Insertion benchmark driver shared by the CLI, scripts and acceptance tests."""

from __future__ import annotations

import threading
import time
from dataclasses import asdict, dataclass, field

from .ingest import load_warmup
from .pm_region import PmRegion
from .store import Graph, GraphConfig


@dataclass
class BenchReport:
    threads: int
    edges: int
    elapsed: float
    meps: float
    write_amplification: float
    media_bytes: int
    payload_bytes: int
    media_bytes_256: int = 0
    ablation: str = "none"
    counters: dict = field(default_factory=dict)
    recovery: dict | None = None

    def to_dict(self):
        return asdict(self)

    def table(self):
        rows = [("ablation", self.ablation), ("threads", self.threads), ("edges", self.edges),
                ("elapsed_s", f"{self.elapsed:.3f}"), ("MEPS", f"{self.meps:.4f}"),
                ("write_amplification", f"{self.write_amplification:.2f}")]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)


def region_capacity(n_ops, n_vertices, config):
    """Generous region size: room for two copies of a ~4x-sized array plus logs."""
    per_item = 4 * 2 * 4
    slots = max(config.initial_leaves() * config.seg_slots, int((n_ops + n_vertices) / 0.3))
    arrays = 2 * (4 * slots * 2 + (slots // config.seg_slots) * (config.elog_sz + 72))
    return max(1 << 22, arrays + per_item * n_vertices + config.max_writers * (config.ulog_sz + 256) + (1 << 20))


def apply_threaded(graph, stream, threads, record=False):
    """Run ``stream`` through ``threads`` writers (contiguous partition).

    With ``record`` each thread returns its acknowledged (src, word) list.
    """
    from .encoding import TOMB

    parts = stream.split(threads) if threads > 1 else [stream]
    acks = [[] for _ in parts]
    errors = []

    def work(i, part):
        try:
            ins, dele = graph.insert_edge, graph.delete_edge
            out = acks[i]
            for s, d, x in part.ops():
                if x:
                    dele(s, d)
                else:
                    ins(s, d)
                if record:
                    out.append((s, TOMB | d if x else d))
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)

    if len(parts) == 1:
        work(0, parts[0])
    else:
        ts = [threading.Thread(target=work, args=(i, p)) for i, p in enumerate(parts)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
    if errors:
        raise errors[0]
    return acks


def run_insert(stream, threads=1, config=None, ablation="none", warmup=0.10, path=None,
               graph=None, record=False):
    """Warm up, then time the rest of ``stream``.  Returns (graph, report, acks)."""
    n_v = stream.n_vertices
    if config is None:
        config = GraphConfig.ablation(ablation, init_vertices=n_v, init_edges=max(1, int(warmup * len(stream))),
                                      concurrent=threads > 1, max_writers=max(16, threads + 1))
    if graph is None:
        region = PmRegion.create(path, region_capacity(len(stream), n_v, config))
        graph = Graph.init(region, config)
    region = graph.region
    rest = load_warmup(graph, stream, warmup) if warmup else stream
    warm = stream[:len(stream) - len(rest)]
    s0 = region.stats.copy()
    t0 = time.perf_counter()
    acks = apply_threaded(graph, rest, threads, record)
    elapsed = time.perf_counter() - t0
    d = region.stats - s0
    report = BenchReport(threads=threads, edges=len(rest), elapsed=elapsed,
                         meps=len(rest) / elapsed / 1e6 if elapsed > 0 else 0.0,
                         write_amplification=d.write_amplification, media_bytes=d.media_bytes,
                         payload_bytes=d.payload_bytes, media_bytes_256=d.media_bytes_256,
                         ablation=ablation, counters=asdict(graph.counters))
    if record:
        from .encoding import TOMB

        warm_acks = [(s, TOMB | d if x else d) for s, d, x in warm.ops()]
        acks = [warm_acks] + acks
    return graph, report, acks
