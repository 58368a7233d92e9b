import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import MultisetOracle, craft, new_graph, pivot, tiny_config
from pmgraph.crashsuite import CrashSuiteConfig, check_prefix, recovered_items, run_crash_suite, small_config
from pmgraph.durability import RecoveryReport, decode_array
from pmgraph.encoding import GAP, MERGED, TOMB
from pmgraph.errors import CorruptRegion, SimulatedCrash
from pmgraph.pm_region import H_ACTIVE_ARRAY, CrashPlan, PmRegion
from pmgraph.store import Graph

G = GAP


def test_decode_canonical_runs():
    d = decode_array([pivot(1), 5, 6, G, pivot(0), G, G, G], 4)
    assert d.canonical
    assert [(r.vertex, r.start, r.items) for r in d.runs] == [(1, 0, [5, 6]), (0, 4, [])]
    assert d.occ == [3, 1] and d.scanned == 8


def test_decode_continuation_pivot_joins_the_run():
    d = decode_array([pivot(1), 5, G, pivot(1), 6, 7, G, G], 4)
    assert not d.canonical and d.continuations == 1
    assert d.by_vertex[1].items == [5, 6, 7]


def test_decode_staged_items_of_a_merged_run():
    d = decode_array([MERGED | 2, 5, G, 8, 9, G, G, G], 4)
    assert d.staged == 1 and d.by_vertex[2].items == [5, 8, 9]


def test_decode_orphans_are_ignored():
    d = decode_array([pivot(2), 5, G, 8, 9, G, G, G], 4)
    assert d.orphans == 2 and d.by_vertex[2].items == [5]


def test_decode_duplicate_vertex_is_corrupt():
    with pytest.raises(CorruptRegion):
        decode_array([pivot(2), G, pivot(3), G, pivot(2), G, G, G], 4)


def test_report_text_round_trip():
    r = RecoveryReport(vertices_rebuilt=3, edges_scanned=64, undo_restores=1, elapsed=0.5)
    assert RecoveryReport.from_text(r.to_text()) == r


def fill(g, n, oracle=None):
    for i in range(n):
        s, d = (i * 31) % 11, (i * 7) % 40
        if i % 5 == 0:
            s = 1
        g.insert_edge(s, d)
        if oracle:
            oracle.insert(s, d)


def logged_graph(oracle=None, want=6):
    """A graph whose fullest section log holds at least ``want`` entries."""
    g = new_graph()
    i = 0
    while max(g.tails) < want:
        s, d = (i * 31) % 11, (i * 7) % 40
        g.insert_edge(s, d)
        if oracle is not None:
            oracle.insert(s, d)
        i += 1
    return g, max(range(len(g.tails)), key=g.tails.__getitem__)


def test_shutdown_round_trip_skips_scan(tmp_path):
    p = str(tmp_path / "g.pm")
    g = Graph.create(p, 1 << 18, tiny_config())
    fill(g, 500)
    entries = {v: g.vertex_entry(v) for v in g.ids}
    items = {v: g.all_items(v) for v in g.ids}
    g.shutdown()
    g2, rep = Graph.open(p)
    assert rep.normal_shutdown and rep.edges_scanned == 0
    assert {v: g2.vertex_entry(v) for v in g2.ids} == entries
    assert {v: g2.all_items(v) for v in g2.ids} == items
    g2.check_invariants()


def test_empty_shutdown(tmp_path):
    p = str(tmp_path / "g.pm")
    Graph.create(p, 1 << 16, tiny_config()).shutdown()
    g, rep = Graph.open(p)
    assert g.n_vertices == 0 and rep.edges_scanned == 0


def test_checkpoint_is_void_after_reopen(tmp_path):
    # reopening clears the clean flag, so a later crash takes the scanning path
    p = str(tmp_path / "g.pm")
    g = Graph.create(p, 1 << 18, tiny_config())
    fill(g, 200)
    g.shutdown()
    g2, _ = Graph.open(p)
    g2.insert_edge(3, 39)
    img = g2.region.crash_image()
    region = PmRegion.from_image(img)
    g3, rep = Graph.recover(region, region.mark_running())
    assert not rep.normal_shutdown and rep.edges_scanned == g2.geom.slots  # one full pass
    assert g3.all_items(3)[-1] == 39


def test_crash_recovery_rebuilds_entries_exactly():
    g = new_graph()
    oracle = MultisetOracle()
    fill(g, 700, oracle)
    region = PmRegion.from_image(g.region.crash_image())
    g2, rep = Graph.recover(region, region.mark_running(), g.config)
    assert rep.edges_scanned <= g2.geom.slots
    for v in g.ids:
        assert g2.vertex_entry(v).degree == g.vertex_entry(v).degree
        assert g2.all_items(v) == oracle.items[v]


def crash_images_during(g, action, torn=False):
    """Run ``action`` while collecting the crash image before every event."""
    seen = {}
    plan = CrashPlan(torn_writes=torn, seed=3)

    def obs(reg, n):
        img = reg.crash_image(plan, n)
        seen.setdefault(img, n)

    g.region.observer = obs
    try:
        action()
    finally:
        g.region.observer = None
    seen.setdefault(g.region.crash_image(plan), -1)  # power lost right after the action
    return list(seen)


def test_resize_crash_has_two_outcomes_both_equal():
    g = new_graph()
    fill(g, 150)
    want = {v: g.all_items(v) for v in g.ids}
    old_base = g.geom.base
    images = crash_images_during(g, g.resize)
    bases = set()
    for img in images:
        region = PmRegion.from_image(img)
        bases.add(region.read_u64(H_ACTIVE_ARRAY))
        g2, _ = Graph.recover(region, region.mark_running(), g.config)
        assert {v: g2.all_items(v) for v in g2.ids} == want
    assert bases == {old_base, g.geom.base}


@pytest.mark.parametrize("torn", [False, True])
def test_every_crash_point_of_a_merge_recovers(torn):
    oracle = MultisetOracle()
    g, s = logged_graph(oracle)
    chunks0 = g.journal.chunks
    images = crash_images_during(g, lambda: g.merge_log(s), torn)
    assert g.journal.chunks - chunks0 >= 3  # a multi-chunk rebalance
    for img in images:
        region = PmRegion.from_image(img)
        g2, _ = Graph.recover(region, region.mark_running(), g.config)
        g2.check_invariants()
        assert {v: g2.all_items(v) for v in g2.ids} == oracle.items


def test_fig4_duplicate_after_partial_move_is_undone():
    # Crash in the middle of a rebalance, when the array may hold a
    # half-moved run: the undo log must restore it.
    oracle = MultisetOracle()
    g, s = logged_graph(oracle)
    restored = 0
    for step in range(1, 200):
        g2, _ = logged_graph()
        g2.region.arm(CrashPlan.at_event(g2.region.event_counter + step))
        try:
            g2.merge_log(s)
        except SimulatedCrash:
            pass
        else:
            break
        region = PmRegion.from_image(bytes(g2.region.durable))
        g3, rep = Graph.recover(region, region.mark_running(), g.config)
        restored += rep.undo_restores
        assert {v: g3.all_items(v) for v in g3.ids} == oracle.items
    assert restored > 0


def test_crash_before_publish_leaves_array_untouched():
    g, s = logged_graph()
    before = bytes(g.region.durable)
    g.region.arm(CrashPlan.at_event(g.region.event_counter))
    with pytest.raises(SimulatedCrash):
        g.merge_log(s)
    assert bytes(g.region.durable) == before


def test_journal_bound_small_workload():
    g = new_graph()
    fill(g, 2000)
    j = g.journal
    assert j.rebalances > 0 and j.within_bound()


def test_adopted_in_flight_item_passes_prefix_check():
    full = {1: [5, 6]}
    import numpy as np

    srcs = np.array([1, 1])
    assert check_prefix({1: [5]}, full, srcs, 1) is None
    assert check_prefix({1: [5, 6]}, full, srcs, 1) is None  # durable, not yet acknowledged
    assert check_prefix({1: []}, full, srcs, 1) is not None
    assert check_prefix({1: [6]}, full, srcs, 1) is not None


@pytest.mark.parametrize("torn", [False, True])
def test_small_exhaustive_crash_suite(torn):
    rep = run_crash_suite(CrashSuiteConfig(edges=300), CrashPlan.exhaustive(torn_writes=torn))
    assert rep.ok, rep.first_failure
    assert rep.points > 0 and rep.rebalances >= 1 and rep.merges >= 1


def test_recovered_items_of_clean_init():
    r = PmRegion.create(None, 1 << 18)
    Graph.init(r, small_config())
    items, rep = recovered_items(r.crash_image())
    assert items == {} and rep.vertices_rebuilt == 0
