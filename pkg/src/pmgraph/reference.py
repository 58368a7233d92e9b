"""Straightforward reference kernels used by ``kernel --verify``.

Deliberately plain: queues, union-find and scipy sparse products instead of
the vectorized frontier code in :mod:`pmgraph.analytics`.
"""

from __future__ import annotations

from collections import deque

import numpy as np
import scipy.sparse as sp


def pagerank(csr, iterations=20, damping=0.85):
    n = csr.n
    deg = csr.degrees().astype(float)
    a = sp.csr_matrix((np.ones(csr.m), csr.targets, csr.offsets), shape=(n, n))
    inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    score = np.full(n, 1.0 / n)
    for _ in range(iterations):
        score = (1 - damping) / n + damping * (a.T @ (score * inv))
    return score


def bfs_depths(csr, source):
    depth = np.full(csr.n, -1, dtype=np.int64)
    depth[source] = 0
    q = deque([source])
    while q:
        u = q.popleft()
        for w in csr.neighbors(u).tolist():
            if depth[w] < 0:
                depth[w] = depth[u] + 1
                q.append(w)
    return depth


def bc(csr, source):
    n = csr.n
    sigma = [0.0] * n
    dist = [-1] * n
    preds = [[] for _ in range(n)]
    sigma[source], dist[source] = 1.0, 0
    order = []
    q = deque([source])
    while q:
        u = q.popleft()
        order.append(u)
        for w in csr.neighbors(u).tolist():
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                q.append(w)
            if dist[w] == dist[u] + 1:
                sigma[w] += sigma[u]
                preds[w].append(u)
    delta = [0.0] * n
    for w in reversed(order):
        for u in preds[w]:
            delta[u] += sigma[u] / sigma[w] * (1 + delta[w])
    delta[source] = 0.0
    return np.array(delta)


def components(csr):
    parent = list(range(csr.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u in range(csr.n):
        for w in csr.neighbors(u).tolist():
            a, b = find(u), find(w)
            if a != b:
                parent[max(a, b)] = min(a, b)
    return np.array([find(x) for x in range(csr.n)])


def same_partition(a, b):
    """Equal up to relabeling."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))
