import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmgraph.errors import BadMagic, CapacityTooSmall, Misaligned, OutOfBounds, SimulatedCrash
from pmgraph.pm_region import H_NORMAL_SHUTDOWN, HEADER_SIZE, LINE, CrashPlan, PmRegion

MiB = 1 << 20


def fresh(cap=1 << 14):
    r = PmRegion.create(None, cap)
    r.mark_running()
    return r


def test_create_sets_normal_shutdown(tmp_path):
    p = tmp_path / "r.pm"
    r = PmRegion.create(str(p), MiB)
    assert r.durable_u64(H_NORMAL_SHUTDOWN) == 1
    r2, was_normal = PmRegion.open(str(p))
    assert was_normal
    assert bytes(r2.durable[:HEADER_SIZE])[:H_NORMAL_SHUTDOWN] == bytes(r.durable[:H_NORMAL_SHUTDOWN])


def test_create_too_small():
    with pytest.raises(CapacityTooSmall):
        PmRegion.create(None, 16)


def test_open_rejects_garbage(tmp_path):
    p = tmp_path / "junk"
    p.write_bytes(b"x" * 4096)
    with pytest.raises(BadMagic):
        PmRegion.open(str(p))


def test_open_after_crash_reports_unclean(tmp_path):
    p = str(tmp_path / "r.pm")
    PmRegion.create(p, 1 << 14)
    r, was_normal = PmRegion.open(p)
    assert was_normal
    r.crash()
    r.reopen()
    r2, was_normal = PmRegion.open(p)
    assert not was_normal
    # open, crash immediately, open again: still unclean
    r2.crash()
    r2.reopen()
    assert not PmRegion.open(p)[1]


def test_store_is_volatile_until_fenced():
    r = fresh()
    r.store(0x100, b"abcd")
    assert r.load(0x100, 4) == b"abcd"
    assert r.crash_image()[0x100:0x104] == b"\0\0\0\0"
    r.flush(0x100, 4)
    assert r.crash_image()[0x100:0x104] == b"\0\0\0\0"  # strict drops unfenced lines
    assert r.crash_image(CrashPlan(permissive=True))[0x100:0x104] == b"abcd"
    r.fence()
    assert r.crash_image()[0x100:0x104] == b"abcd"


def test_media_bytes_counts_lines_not_stores():
    r = fresh()
    before = r.stats.media_bytes
    for i in range(1000):
        r.store(0x200 + (i % 16) * 4, struct.pack("<I", i))
    r.flush(0x200, 64)
    r.fence()
    assert r.stats.media_bytes - before == 64


def test_flush_of_clean_line_costs_nothing():
    r = fresh()
    before = r.stats.media_bytes
    r.flush(0x400, 256)
    r.fence()
    assert r.stats.media_bytes == before


def test_bounds_and_alignment():
    r = fresh()
    with pytest.raises(OutOfBounds):
        r.store(r.capacity - 2, b"abcd")
    with pytest.raises(Misaligned):
        r.atomic_store_8(3, 1)


def test_atomic_store_never_mixes_under_torn_writes():
    old, new = 0x1111111111111111, 0x2222222222222222
    states = set()
    for seed in range(40):
        for ev in range(4):
            r = fresh()
            r.persist(0x300, struct.pack("<Q", old))
            r.arm(CrashPlan.at_event(r.event_counter + ev, torn_writes=True, seed=seed))
            try:
                r.atomic_store_8(0x300, new)
                r.flush(0x300, 8)
                r.fence()
                r.fence()
            except SimulatedCrash:
                pass
            states.add(struct.unpack_from("<Q", r.durable, 0x300)[0])
    assert states == {old, new}


def test_exhaustive_single_atomic_store_has_two_states():
    r = fresh()
    images = set()

    def obs(reg, n):
        images.add(reg.crash_image(CrashPlan(torn_writes=True, seed=n), n)[0x500:0x508])

    r.observer = obs
    r.atomic_store_8(0x500, 7)
    r.flush(0x500, 8)
    r.fence()
    r.observer = None
    images.add(bytes(r.durable[0x500:0x508]))
    assert images == {bytes(8), struct.pack("<Q", 7)}


def test_crash_with_nothing_dirty_keeps_working_image():
    r = fresh()
    r.persist(0x100, b"xyz!")
    snap = bytes(r.working)
    r.crash()
    r.reopen()
    assert bytes(r.working) == snap


def test_random_torn_plan_is_reproducible():
    def run():
        r = fresh()
        r.store(0x100, bytes(range(64)))
        r.flush(0x100, 64)
        return r.crash_image(CrashPlan.random(5, 1, torn_writes=True), event=9)

    assert run() == run()


def test_arm_raises_and_leaves_durable_prefix():
    r = fresh()
    r.arm(CrashPlan.at_event(r.event_counter + 3))
    with pytest.raises(SimulatedCrash):
        r.persist(0x100, b"aaaa")  # events: store, flush, fence
        r.persist(0x140, b"bbbb")
    assert r.durable[0x100:0x104] == b"aaaa"
    assert r.durable[0x140:0x144] == b"\0\0\0\0"


# ---- replay oracle: durable image == replay of all fenced flushes ----------

ops = st.lists(st.one_of(
    st.tuples(st.just("store"), st.integers(0, 15), st.binary(min_size=1, max_size=24)),
    st.tuples(st.just("flush"), st.integers(0, 15), st.integers(1, 96)),
    st.tuples(st.just("fence"), st.just(0), st.just(0)),
), max_size=60)


@given(ops, st.integers(0, 200))
def test_durable_matches_replay_oracle(seq, cut):
    base = HEADER_SIZE + 1024
    r = fresh(base + 16 * LINE + 256)
    start = r.event_counter
    model_working = bytearray(r.working)
    model_durable = bytearray(r.durable)
    dirty, pending = set(), {}
    r.arm(CrashPlan.at_event(start + cut))
    try:
        for kind, a, b in seq:
            off = base + a * 16
            if kind == "store":
                r.store(off, b)
                model_working[off:off + len(b)] = b
                dirty.update(range(off // LINE, (off + len(b) - 1) // LINE + 1))
            elif kind == "flush":
                r.flush(off, b)
                for line in range(off // LINE, (off + b - 1) // LINE + 1):
                    if line in dirty:
                        dirty.discard(line)
                        pending[line] = bytes(model_working[line * LINE:(line + 1) * LINE])
            else:
                r.fence()
                for line, data in pending.items():
                    model_durable[line * LINE:(line + 1) * LINE] = data
                pending.clear()
    except SimulatedCrash:
        pass
    assert bytes(r.durable) == bytes(model_durable)
    assert r.stats.media_bytes % 64 == 0


@given(st.lists(st.integers(1, 40), min_size=1, max_size=30))
def test_monotone_refinement_of_fenced_prefixes(lengths):
    """Crashing later never loses something an earlier crash already kept."""
    r = fresh(HEADER_SIZE + 8192)
    imgs = []
    r.observer = lambda reg, n: imgs.append(reg.crash_image())
    off = HEADER_SIZE
    for k, n in enumerate(lengths):
        r.persist(off, bytes([k + 1]) * n)
        off += n
    r.observer = None
    for a, b in zip(imgs, imgs[1:]):
        diff = [i for i in range(len(a)) if a[i] != b[i]]
        assert all(a[i] == 0 for i in diff)
