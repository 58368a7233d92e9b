"""Edge-list parsing, R-MAT generation and the warm-up protocol."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .encoding import MAX_VERTEX
from .errors import BadParams, IdOverflow, ParseError

BIN_MAGIC = b"DGAPEL01"
_BIN_HEAD = struct.Struct("<8sQ")


@dataclass
class EdgeStream:
    """Ordered (src, dst) pairs; ``deleted[i]`` marks pair i as a deletion."""

    src: np.ndarray
    dst: np.ndarray
    deleted: np.ndarray = None
    seed: int | None = None

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        if self.deleted is None:
            self.deleted = np.zeros(len(self.src), dtype=bool)

    def __len__(self):
        return len(self.src)

    def pairs(self):
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def ops(self):
        """(src, dst, is_delete) triples."""
        return list(zip(self.src.tolist(), self.dst.tolist(), self.deleted.tolist()))

    def __getitem__(self, sl):
        return EdgeStream(self.src[sl], self.dst[sl], self.deleted[sl], self.seed)

    @property
    def n_vertices(self):
        if not len(self):
            return 0
        return int(max(self.src.max(), self.dst.max())) + 1

    def split(self, parts):
        """Contiguous partition across writer threads."""
        bounds = np.linspace(0, len(self), parts + 1).astype(np.int64)
        return [self[int(a):int(b)] for a, b in zip(bounds[:-1], bounds[1:])]


def _check_ids(arr, lineno=None):
    if len(arr) and (arr.min() < 0 or arr.max() > MAX_VERTEX):
        raise IdOverflow(f"vertex id outside [0, {MAX_VERTEX}]")


def parse_edge_list(path, symmetrize=False):
    """SNAP text format: '#' comments, two whitespace-separated decimal ids per line."""
    src, dst = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) < 2:
                raise ParseError(lineno, f"expected two ids, got {s!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(lineno, f"non-numeric id in {s!r}") from None
            if not (0 <= a <= MAX_VERTEX and 0 <= b <= MAX_VERTEX):
                raise IdOverflow(f"line {lineno}: id outside [0, {MAX_VERTEX}]")
            src.append(a)
            dst.append(b)
            if symmetrize:
                src.append(b)
                dst.append(a)
    return EdgeStream(src, dst)


def write_edge_list(path, stream):
    with open(path, "w") as fh:
        for a, b in stream.pairs():
            fh.write(f"{a} {b}\n")


def write_binary(path, stream):
    with open(path, "wb") as fh:
        fh.write(_BIN_HEAD.pack(BIN_MAGIC, len(stream)))
        pairs = np.empty((len(stream), 2), dtype="<u4")
        pairs[:, 0] = stream.src
        pairs[:, 1] = stream.dst
        fh.write(pairs.tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _BIN_HEAD.size:
        raise ParseError(0, "truncated binary header")
    magic, count = _BIN_HEAD.unpack_from(data)
    if magic != BIN_MAGIC:
        raise ParseError(0, "bad binary magic")
    if len(data) != _BIN_HEAD.size + 8 * count:
        raise ParseError(0, f"expected {count} pairs")
    pairs = np.frombuffer(data, dtype="<u4", offset=_BIN_HEAD.size).reshape(count, 2).astype(np.int64)
    _check_ids(pairs.ravel())
    return EdgeStream(pairs[:, 0], pairs[:, 1])


def load(path, symmetrize=False):
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == BIN_MAGIC:
        s = read_binary(path)
        if symmetrize:
            s = EdgeStream(np.column_stack((s.src, s.dst)).ravel(), np.column_stack((s.dst, s.src)).ravel())
        return s
    return parse_edge_list(path, symmetrize)


def rmat(scale, edge_factor, seed=0, a=0.57, b=0.19, c=0.19, d=0.05):
    """R-MAT generator: 2**scale vertices, edge_factor * 2**scale edges."""
    probs = (a, b, c, d)
    if scale < 0 or edge_factor < 0 or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
        raise BadParams(f"bad R-MAT parameters scale={scale} factor={edge_factor} probs={probs}")
    if scale > 30:
        raise IdOverflow("R-MAT scale exceeds the 30-bit id space")
    m = edge_factor << scale
    rng = np.random.default_rng(seed)
    src = np.zeros(m, dtype=np.int64)
    dst = np.zeros(m, dtype=np.int64)
    cum = np.cumsum(probs)
    for bit in range(scale):
        r = rng.random(m)
        quad = np.searchsorted(cum, r, side="right")
        src |= (quad >> 1).astype(np.int64) << bit
        dst |= (quad & 1).astype(np.int64) << bit
    return EdgeStream(src, dst, seed=seed)


def uniform(scale, edge_factor, seed=0):
    """Erdos-Renyi-style baseline with the same size as rmat()."""
    m = edge_factor << scale
    rng = np.random.default_rng(seed)
    return EdgeStream(rng.integers(0, 1 << scale, m), rng.integers(0, 1 << scale, m), seed=seed)


def shuffle(stream, seed):
    perm = np.random.default_rng(seed).permutation(len(stream))
    return EdgeStream(stream.src[perm], stream.dst[perm], stream.deleted[perm], seed)


def interleave_deletions(stream, fraction, seed):
    """Insert deletions of earlier-inserted pairs at random later positions."""
    n = len(stream)
    k = int(round(fraction * n))
    if k == 0 or n == 0:
        return stream
    rng = np.random.default_rng(seed)
    victims = np.sort(rng.choice(n, size=k, replace=False))
    # each deletion lands strictly after its victim's insertion
    pos = victims + 1 + (rng.random(k) * (n - victims)).astype(np.int64)
    src = np.concatenate((stream.src, stream.src[victims]))
    dst = np.concatenate((stream.dst, stream.dst[victims]))
    deleted = np.concatenate((stream.deleted, np.ones(k, dtype=bool)))
    key = np.concatenate((np.arange(n) * 2.0, pos * 2.0 - 1.0))
    order = np.argsort(key, kind="stable")
    return EdgeStream(src[order], dst[order], deleted[order], stream.seed)


@dataclass
class Remapper:
    """Optional densifying id map for datasets with sparse ids."""

    forward: dict = field(default_factory=dict)

    def __call__(self, stream):
        fwd = self.forward
        src = [fwd.setdefault(int(x), len(fwd)) for x in stream.src]
        dst = [fwd.setdefault(int(x), len(fwd)) for x in stream.dst]
        return EdgeStream(src, dst, stream.deleted, stream.seed)


def apply(graph, stream):
    ins, dele = graph.insert_edge, graph.delete_edge
    for s, d, x in stream.ops():
        (dele if x else ins)(s, d)


def load_warmup(graph, stream, fraction=0.10):
    """Insert the first floor(fraction * len) operations unmeasured; return the rest."""
    if not 0 <= fraction < 1:
        raise BadParams(f"warm-up fraction {fraction} outside [0, 1)")
    k = int(fraction * len(stream))
    apply(graph, stream[:k])
    return stream[k:]
