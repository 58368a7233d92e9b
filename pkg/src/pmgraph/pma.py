"""Packed-memory-array bookkeeping: thresholds, density tree, gap planning.

Everything here is pure planning over counts; the data movement itself lives
in :mod:`pmgraph.durability`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BadConfig, Overflow, RegionCapacityExceeded


@dataclass(frozen=True)
class Thresholds:
    """Density bounds interpolated linearly from root (height 0) to leaves."""

    rho_leaf: float = 0.08
    tau_leaf: float = 0.92
    rho_root: float = 0.30
    tau_root: float = 0.70

    def __post_init__(self):
        if not (0 < self.rho_leaf <= self.rho_root < self.tau_root <= self.tau_leaf <= 1):
            raise BadConfig(f"inconsistent density thresholds {self}")

    def at(self, i, h):
        return thresholds_at(i, h, self)


DEFAULT_THRESHOLDS = Thresholds()


def thresholds_at(i, h, t=DEFAULT_THRESHOLDS):
    """(rho, tau) for a node at height ``i`` below the root of a tree of height ``h``."""
    if not 0 <= i <= h:
        raise ValueError(f"height {i} outside [0, {h}]")
    if h == 0:
        return t.rho_root, t.tau_root
    f = i / h
    return (t.rho_root + (t.rho_leaf - t.rho_root) * f,
            t.tau_root + (t.tau_leaf - t.tau_root) * f)


class DensityTree:
    """Complete binary tree of per-node item counts over the leaf segments.

    Node 1 is the root; leaves are nodes ``L .. 2L-1``.  ``occ`` counts
    non-gap array slots, ``logocc`` counts edge-log entries of the section.
    """

    def __init__(self, n_leaves, seg_slots):
        if n_leaves < 1 or n_leaves & (n_leaves - 1):
            raise BadConfig(f"leaf count {n_leaves} is not a power of two")
        self.n_leaves = n_leaves
        self.seg_slots = seg_slots
        self.height = n_leaves.bit_length() - 1
        self.occ = [0] * (2 * n_leaves)
        self.logocc = [0] * (2 * n_leaves)

    @classmethod
    def from_counts(cls, occ, logocc, seg_slots):
        tree = cls(len(occ), seg_slots)
        tree.rebuild(occ, logocc)
        return tree

    def rebuild(self, occ, logocc):
        L = self.n_leaves
        self.occ[L:] = occ
        self.logocc[L:] = logocc
        for node in range(L - 1, 0, -1):
            self.occ[node] = self.occ[2 * node] + self.occ[2 * node + 1]
            self.logocc[node] = self.logocc[2 * node] + self.logocc[2 * node + 1]

    def add(self, leaf, d_occ=0, d_log=0):
        node = self.n_leaves + leaf
        occ, logocc = self.occ, self.logocc
        while node:
            occ[node] += d_occ
            logocc[node] += d_log
            node >>= 1

    def set_leaf(self, leaf, occ=None, logocc=None):
        node = self.n_leaves + leaf
        d_occ = 0 if occ is None else occ - self.occ[node]
        d_log = 0 if logocc is None else logocc - self.logocc[node]
        if d_occ or d_log:
            self.add(leaf, d_occ, d_log)

    def leaf_occ(self, leaf):
        return self.occ[self.n_leaves + leaf]

    def leaf_log(self, leaf):
        return self.logocc[self.n_leaves + leaf]

    def node_leaves(self, node):
        """(first_leaf, last_leaf_exclusive) covered by ``node``."""
        depth = node.bit_length() - 1
        width = self.n_leaves >> depth
        first = (node - (1 << depth)) * width
        return first, first + width

    def node_density(self, node, extra=0):
        lo, hi = self.node_leaves(node)
        return (self.occ[node] + self.logocc[node] + extra) / ((hi - lo) * self.seg_slots)

    def leaf_density(self, leaf):
        return self.node_density(self.n_leaves + leaf)

    def total_items(self):
        return self.occ[1] + self.logocc[1]

    def check(self):
        for node in range(1, self.n_leaves):
            assert self.occ[node] == self.occ[2 * node] + self.occ[2 * node + 1]
            assert self.logocc[node] == self.logocc[2 * node] + self.logocc[2 * node + 1]


class ResizeNeeded:
    """Sentinel returned when no ancestor can absorb the load."""

    def __repr__(self):
        return "ResizeNeeded"


RESIZE = ResizeNeeded()


def find_rebalance_range(leaf, tree, thresholds=DEFAULT_THRESHOLDS, extra=0, min_depth=None):
    """Slot interval of the lowest ancestor of ``leaf`` whose combined density fits.

    The leaf itself is the first candidate.  ``extra`` adds items that are
    about to be placed (e.g. a new pivot).  Only the upper bound is checked:
    the engine never removes items, so the lower bound cannot be what breaks.
    Returns ``(lo_slot, hi_slot)`` or :data:`RESIZE`.
    """
    h = tree.height
    node = tree.n_leaves + leaf
    depth = h
    while node:
        if min_depth is None or depth <= min_depth:
            _, tau = thresholds_at(depth, h, thresholds)
            if tree.node_density(node, extra) <= tau:
                lo, hi = tree.node_leaves(node)
                return lo * tree.seg_slots, hi * tree.seg_slots
        node >>= 1
        depth -= 1
    return RESIZE


@dataclass
class Placement:
    vertex: int
    old_start: int  # pivot slot before the move (-1 for a vertex being created)
    array_len: int  # pivot + array-resident items
    log_items: list = field(default_factory=list)  # chronological slot words drained from the log
    new_start: int = -1
    span: int = 0  # reserved slots: run + its trailing gaps

    @property
    def items(self):
        return self.array_len + len(self.log_items)

    @property
    def new_end(self):
        """One past the last occupied slot after the merge."""
        return self.new_start + self.items


@dataclass
class RedistributionPlan:
    range: tuple
    placements: list
    total_items: int


def plan_redistribution(lo, hi, placements):
    """Assign every run in ``[lo, hi)`` a new pivot slot and reserved span.

    Gaps: one per vertex up front, the rest proportional to each vertex's
    item count excluding its pivot (floor), leftovers one at a time from the
    left.  Order of ``placements`` is preserved.
    """
    length = hi - lo
    total = sum(p.items for p in placements)
    n = len(placements)
    gaps = length - total
    if gaps < n:
        raise Overflow(f"{total} items + {n} minimum gaps exceed range of {length}")
    if n == 0:
        return RedistributionPlan((lo, hi), [], 0)
    free = gaps - n
    weights = [p.items - 1 for p in placements]
    wsum = sum(weights)
    if wsum == 0:
        weights = [1] * n
        wsum = n
    shares = [free * w // wsum for w in weights]
    rest = free - sum(shares)
    for i in range(rest):
        shares[i] += 1
    pos = lo
    for p, share in zip(placements, shares):
        p.new_start = pos
        p.span = p.items + 1 + share
        pos += p.span
    assert pos == hi
    return RedistributionPlan((lo, hi), placements, total)


def plan_resize(current_slots, total_items, max_slots=None, thresholds=DEFAULT_THRESHOLDS, factor=2):
    """Next array capacity: double until the load sits under the root bound."""
    new = current_slots * factor
    while total_items / new > thresholds.tau_root:
        new *= factor
    if max_slots is not None and new > max_slots:
        raise RegionCapacityExceeded(f"resize to {new} slots exceeds region limit of {max_slots}")
    return new
