from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import new_graph
from pmgraph.errors import BadParams, IdOverflow, ParseError
from pmgraph.ingest import (EdgeStream, Remapper, interleave_deletions, load, load_warmup,
                            parse_edge_list, read_binary, rmat, shuffle, uniform, write_binary,
                            write_edge_list)


def test_parse_comments_and_symmetrize(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# c\n0 1\n")
    assert parse_edge_list(str(p)).pairs() == [(0, 1)]
    p.write_text("0 1")
    assert parse_edge_list(str(p), symmetrize=True).pairs() == [(0, 1), (1, 0)]


def test_parse_errors(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 x\n")
    with pytest.raises(ParseError) as err:
        parse_edge_list(str(p))
    assert err.value.line == 1
    p.write_text(f"0 {2**30 - 1}\n")
    with pytest.raises(IdOverflow):
        parse_edge_list(str(p))


@given(st.lists(st.tuples(st.integers(0, 2**30 - 2), st.integers(0, 2**30 - 2)), max_size=50))
def test_ingestion_is_lossless(tmp_path_factory, pairs):
    d = tmp_path_factory.mktemp("ing")
    s = EdgeStream([a for a, _ in pairs], [b for _, b in pairs])
    write_edge_list(d / "t.txt", s)
    write_binary(d / "b.bin", s)
    assert Counter(load(str(d / "t.txt")).pairs()) == Counter(pairs)
    assert read_binary(str(d / "b.bin")).pairs() == pairs
    assert load(str(d / "b.bin")).pairs() == pairs


def test_binary_header_layout(tmp_path):
    p = tmp_path / "b.bin"
    write_binary(p, EdgeStream([1], [2]))
    data = p.read_bytes()
    assert data[:8] == b"DGAPEL01" and len(data) == 16 + 8
    assert int.from_bytes(data[8:16], "little") == 1


def test_rmat_counts_and_determinism():
    s = rmat(4, 8, seed=1)
    assert len(s) == 128 and s.n_vertices <= 16
    assert rmat(4, 8, seed=1).pairs() == s.pairs()
    with pytest.raises(BadParams):
        rmat(4, 8, a=0.5, b=0.5, c=0.5, d=0.5)


def test_rmat_heavier_tail_than_uniform():
    r = np.bincount(rmat(12, 8, seed=2).src).max()
    u = np.bincount(uniform(12, 8, seed=2).src).max()
    assert r > 3 * u


def test_shuffle_is_a_seeded_permutation():
    s = rmat(6, 4, seed=0)
    a, b = shuffle(s, 9), shuffle(s, 9)
    assert a.pairs() == b.pairs()
    assert Counter(a.pairs()) == Counter(s.pairs())
    assert a.pairs() != shuffle(s, 10).pairs()


def test_deletions_follow_their_insertions():
    s = interleave_deletions(rmat(6, 4, seed=0), 0.1, 3)
    assert s.deleted.sum() == round(0.1 * 256)
    seen = Counter()
    for a, b, x in s.ops():
        if x:
            assert seen[(a, b)] > 0
            seen[(a, b)] -= 1
        else:
            seen[(a, b)] += 1


def test_warmup_counts():
    g = new_graph()
    s = EdgeStream(list(range(100)), [0] * 100)
    rest = load_warmup(g, s, 0.10)
    assert len(rest) == 90 and g.n_items == 10
    g2 = new_graph()
    assert len(load_warmup(g2, s, 0)) == 100 and g2.n_items == 0
    with pytest.raises(BadParams):
        load_warmup(g2, s, 1.0)


def test_warmup_plus_rest_equals_full_insert():
    s = shuffle(rmat(6, 8, seed=4), 1)
    a, b = new_graph(), new_graph()
    rest = load_warmup(a, s, 0.1)
    for u, v in rest.pairs():
        a.insert_edge(u, v)
    for u, v in s.pairs():
        b.insert_edge(u, v)
    sa, sb = a.consistent_view(), b.consistent_view()
    assert sa.vertices() == sb.vertices()
    assert all(sa.items(v) == sb.items(v) for v in sa.vertices())


def test_remapper_densifies():
    m = Remapper()
    out = m(EdgeStream([1000, 7], [7, 99]))
    assert out.pairs() == [(0, 1), (1, 2)]


def test_split_is_contiguous():
    s = EdgeStream(list(range(10)), list(range(10)))
    parts = s.split(3)
    assert sum((p.pairs() for p in parts), []) == s.pairs()
