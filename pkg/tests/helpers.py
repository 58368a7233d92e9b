"""Shared builders and oracles for the test suite."""

from pmgraph.encoding import ENTRY, NULL, PIVOT, TOMB
from pmgraph.pm_region import PmRegion
from pmgraph.store import Graph, GraphConfig


def tiny_config(**kw):
    base = dict(init_vertices=4, init_edges=16, seg_slots=16, elog_sz=120, ulog_sz=128,
                max_writers=4, concurrent=False)
    base.update(kw)
    return GraphConfig(**base)


def new_graph(capacity=1 << 18, **kw):
    return Graph.create(None, capacity, tiny_config(**kw))


def craft(array, logs=None, **kw):
    """Recover a graph from a hand-written durable layout.

    ``array`` maps slot -> word; ``logs`` maps section -> [(src, word)], with
    back pointers chained per source in list order.
    """
    g = new_graph(**kw)
    r, geom = g.region, g.geom
    for slot, word in array.items():
        r.persist(geom.slot_off(slot), word.to_bytes(4, "little"))
    for s, entries in (logs or {}).items():
        last = {}
        for k, (src, word) in enumerate(entries):
            r.persist(geom.entry_off(s, k), ENTRY.pack(src, word, last.get(src, NULL)))
            last[src] = k
        r.atomic_store_8(geom.tail_off(s), len(entries))
        r.flush(geom.tail_off(s), 8)
        r.fence()
    region = PmRegion.from_image(r.crash_image())
    g2, report = Graph.recover(region, region.mark_running(), g.config)
    return g2, report


class MultisetOracle:
    """Acknowledged order per vertex; a delete removes the earliest surviving equal edge."""

    def __init__(self):
        self.items = {}
        self.visible = {}

    def insert(self, s, d):
        self.items.setdefault(s, []).append(d)
        self.visible.setdefault(s, []).append(d)

    def delete(self, s, d):
        self.items.setdefault(s, []).append(TOMB | d)
        vis = self.visible.setdefault(s, [])
        if d in vis:
            vis.remove(d)


def pivot(v):
    return PIVOT | v
