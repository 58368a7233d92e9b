"""GAPBS-style kernels (PR, BFS, BC, CC) over a CSR materialized from a snapshot.

Kernels are vectorized with numpy; ``threads`` splits PageRank's pull phase
into vertex slices.  Reductions use ``np.bincount`` in edge order, so
results do not depend on the slicing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGraph, UnknownKernel, UnknownVertex

ALPHA = 15
BETA = 18
KERNELS = ("pr", "bfs", "bc", "cc")


@dataclass
class CSR:
    offsets: np.ndarray  # int64, n + 1
    targets: np.ndarray  # int64, m

    @property
    def n(self):
        return len(self.offsets) - 1

    @property
    def m(self):
        return len(self.targets)

    def degrees(self):
        return np.diff(self.offsets)

    def neighbors(self, v):
        return self.targets[self.offsets[v]:self.offsets[v + 1]]

    @classmethod
    def from_lists(cls, lists):
        deg = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
        offsets = np.zeros(len(lists) + 1, dtype=np.int64)
        np.cumsum(deg, out=offsets[1:])
        flat = [d for x in lists for d in x]
        return cls(offsets, np.asarray(flat, dtype=np.int64))

    @classmethod
    def from_edges(cls, n, src, dst):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        order = np.argsort(src, kind="stable")
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
        return cls(offsets, dst[order])

    @classmethod
    def from_snapshot(cls, snap):
        lists = []
        top = len(snap.degree_cache) - 1
        for v, d in enumerate(snap.degree_cache):
            nb = snap.neighbors(v) if d > 0 else ()
            if nb:
                top = max(top, max(nb))
            lists.append(nb)
        # destinations never used as a source still count as (isolated) vertices
        lists.extend(() for _ in range(top + 1 - len(lists)))
        return cls.from_lists(lists)

    def edge_sources(self):
        return np.repeat(np.arange(self.n, dtype=np.int64), self.degrees())

    def transpose(self):
        return CSR.from_edges(self.n, self.targets, self.edge_sources())


def _as_csr(g):
    return g if isinstance(g, CSR) else CSR.from_snapshot(g)


def _slices(n, threads):
    threads = max(1, min(threads, n))
    bounds = np.linspace(0, n, threads + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def pagerank(g, iterations=20, damping=0.85, threads=1):
    csr = _as_csr(g)
    n = csr.n
    if n == 0:
        raise EmptyGraph("pagerank on an empty graph")
    outdeg = csr.degrees()
    inv = csr.transpose()
    rows = inv.edge_sources()
    score = np.full(n, 1.0 / n)
    base = (1.0 - damping) / n
    slices = _slices(n, threads)
    safe = np.where(outdeg > 0, outdeg, 1)

    def pull(ab, contrib):
        a, b = ab
        ea, eb = inv.offsets[a], inv.offsets[b]
        return np.bincount(rows[ea:eb] - a, weights=contrib[inv.targets[ea:eb]], minlength=b - a)

    pool = ThreadPoolExecutor(len(slices)) if len(slices) > 1 else None
    try:
        for _ in range(iterations):
            contrib = np.where(outdeg > 0, score / safe, 0.0)
            if pool is None:
                sums = pull((0, n), contrib)
            else:
                sums = np.concatenate(list(pool.map(lambda ab: pull(ab, contrib), slices)))
            score = base + damping * sums
    finally:
        if pool is not None:
            pool.shutdown()
    return score


def _check_source(csr, source):
    if not 0 <= source < csr.n:
        raise UnknownVertex(source)


def _expand(csr, frontier):
    """(sources, targets) of all out-edges of ``frontier``, in frontier order."""
    starts = csr.offsets[frontier]
    counts = csr.offsets[frontier + 1] - starts
    total = int(counts.sum())
    if total == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e
    srcs = np.repeat(frontier, counts)
    first = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
    idx = first + np.arange(total)
    return srcs, csr.targets[idx]


def bfs(g, source, threads=1, inverse=None):
    """Direction-optimizing BFS; returns parents (-1 unreached, source -> itself)."""
    csr = _as_csr(g)
    _check_source(csr, source)
    n = csr.n
    outdeg = csr.degrees()
    parent = np.full(n, -1, dtype=np.int64)
    parent[source] = source
    frontier = np.array([source], dtype=np.int64)
    edges_to_check = csr.m
    scout = int(outdeg[source])
    inv = inverse
    while frontier.size:
        if scout > edges_to_check / ALPHA:
            if inv is None:
                inv = csr.transpose()
            awake = frontier.size
            front = np.zeros(n, dtype=bool)
            front[frontier] = True
            while True:
                old = awake
                front = _bottom_up(inv, parent, front)
                awake = int(front.sum())
                if awake == 0 or not (awake >= old or awake > n / BETA):
                    break
            frontier = np.flatnonzero(front)
            scout = 1
        else:
            edges_to_check -= scout
            srcs, dsts = _expand(csr, frontier)
            fresh = parent[dsts] < 0
            dsts, srcs = dsts[fresh], srcs[fresh]
            uniq, first = np.unique(dsts, return_index=True)
            parent[uniq] = srcs[first]
            frontier = uniq
            scout = int(outdeg[frontier].sum())
    return parent


def _bottom_up(inv, parent, front):
    unvisited = np.flatnonzero(parent < 0)
    srcs, ins = _expand(inv, unvisited)
    hit = front[ins]
    nxt = np.zeros_like(front)
    if hit.any():
        verts, first = np.unique(srcs[hit], return_index=True)
        parent[verts] = ins[hit][first]
        nxt[verts] = True
    return nxt


def depths(parent, source):
    """Depth per vertex from a parent array (-1 unreached)."""
    n = len(parent)
    depth = np.full(n, -1, dtype=np.int64)
    depth[source] = 0
    todo = np.flatnonzero((parent >= 0) & (np.arange(n) != source))
    while todo.size:
        known = depth[parent[todo]] >= 0
        depth[todo[known]] = depth[parent[todo[known]]] + 1
        if not known.any():
            raise ValueError("parent array has a cycle")
        todo = todo[~known]
    return depth


def bc(g, source, threads=1):
    """Single-source Brandes dependencies over unweighted shortest paths."""
    csr = _as_csr(g)
    _check_source(csr, source)
    n = csr.n
    depth = np.full(n, -1, dtype=np.int64)
    sigma = np.zeros(n)
    depth[source] = 0
    sigma[source] = 1.0
    levels = [np.array([source], dtype=np.int64)]
    while True:
        srcs, dsts = _expand(csr, levels[-1])
        if dsts.size == 0:
            break
        d = len(levels)
        new = depth[dsts] < 0
        depth[dsts[new]] = d
        on = depth[dsts] == d
        np.add.at(sigma, dsts[on], sigma[srcs[on]])
        nxt = np.unique(dsts[new])
        if nxt.size == 0:
            break
        levels.append(nxt)
    delta = np.zeros(n)
    for d in range(len(levels) - 2, -1, -1):
        srcs, dsts = _expand(csr, levels[d])
        on = depth[dsts] == d + 1
        s, w = srcs[on], dsts[on]
        np.add.at(delta, s, sigma[s] / sigma[w] * (1.0 + delta[w]))
    delta[source] = 0.0
    return delta


def cc(g, threads=1):
    """Shiloach-Vishkin hooking + pointer jumping on the undirected closure."""
    csr = _as_csr(g)
    n = csr.n
    comp = np.arange(n, dtype=np.int64)
    u0 = csr.edge_sources()
    v0 = csr.targets
    u = np.concatenate((u0, v0))
    v = np.concatenate((v0, u0))
    while True:
        cu, cv = comp[u], comp[v]
        mask = (cu < cv) & (comp[cv] == cv)
        if not mask.any():
            if np.array_equal(comp[u], comp[v]):
                break
        np.minimum.at(comp, cv[mask], cu[mask])
        while True:
            nxt = comp[comp]
            if np.array_equal(nxt, comp):
                break
            comp = nxt
    return comp


def run_kernel(name, g, source=0, threads=1):
    if name == "pr":
        return pagerank(g, threads=threads)
    if name == "bfs":
        return bfs(g, source, threads=threads)
    if name == "bc":
        return bc(g, source, threads=threads)
    if name == "cc":
        return cc(g, threads=threads)
    raise UnknownKernel(f"unknown kernel {name!r}; choose from {KERNELS}")


def write_result(path, values):
    with open(path, "w") as fh:
        for v, x in enumerate(values):
            fh.write(f"{v}\t{format_value(x)}\n")


def format_value(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(int(x))
