import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tschrl.exceptions import ConfigurationError, ContractError
from tschrl.schedule import (
    Cell,
    TschSchedule,
    add_link,
    empty_schedule,
    load_schedule,
    lookup_next,
    remove_link,
    rx_slot_count,
    save_schedule,
    tx_slot_count,
)


def brute_feasible(entries):
    """Every cell used once, every (node, timeslot) pair used once."""
    cells = [(u, ch) for u, ch, _, _ in entries]
    node_slots = [(n, u) for u, _, s, d in entries for n in (s, d)]
    return len(set(cells)) == len(cells) and len(set(node_slots)) == len(node_slots)


def brute_lookup(entries, node, dst, asn, size):
    """Minimum forward distance over all matching entries, scan order ties."""
    best = None
    for u, ch, s, d in entries:
        if s == node and d == dst:
            diff = (u - asn % size) % size
            if best is None or diff < best[0]:
                best = (diff, Cell(u, ch))
    return best


def test_add_to_empty():
    s, ok = add_link(empty_schedule(), 3, 1, (4, 0))
    assert ok and len(s) == 1


def test_add_occupied_cell():
    s, _ = add_link(empty_schedule(), 3, 1, (4, 0))
    s2, ok = add_link(s, 5, 2, (4, 0))
    assert not ok and s2 is s


def test_add_node_busy_other_channel():
    s, _ = add_link(empty_schedule(), 3, 1, (4, 0))
    _, ok = add_link(s, 1, 6, (4, 1))
    assert not ok
    assert not brute_feasible([(4, 0, 3, 1), (4, 1, 1, 6)])


def test_add_rejects_non_neighbors(grid10):
    _, ok = add_link(empty_schedule(), 1, 6, (0, 0), graph=grid10)
    assert not ok


def test_remove_link_cases():
    s, _ = add_link(empty_schedule(), 3, 1, (4, 0))
    out, ok = remove_link(s, (4, 0), 1)
    assert ok and len(out) == 0
    _, ok = remove_link(empty_schedule(), (4, 0), 1)
    assert not ok
    _, ok = remove_link(s, (4, 0), 2)
    assert not ok


def test_cell_bounds_enforced():
    with pytest.raises(ContractError):
        add_link(empty_schedule(), 3, 1, (17, 0))
    with pytest.raises(ContractError):
        remove_link(empty_schedule(), (0, 2), 1)


def test_slotframe_must_be_positive():
    with pytest.raises(ConfigurationError):
        TschSchedule(0, 2, 10.0)


def test_lookup_prefers_nearest_future_slot():
    s = empty_schedule()
    s, _ = add_link(s, 3, 1, (2, 0))
    s, _ = add_link(s, 3, 1, (9, 1))
    assert lookup_next(s, 3, 1, 20) == Cell(9, 1)


def test_lookup_current_slot_and_no_match():
    s, _ = add_link(empty_schedule(), 3, 1, (5, 0))
    assert lookup_next(s, 3, 1, 17 * 3 + 5) == Cell(5, 0)
    assert lookup_next(s, 3, 2, 0) is None


def test_slot_counts():
    s = empty_schedule()
    s, _ = add_link(s, 3, 1, (4, 0))
    s, _ = add_link(s, 3, 1, (9, 1))
    assert tx_slot_count(s, 3) == 2 and rx_slot_count(s, 1) == 2
    assert tx_slot_count(empty_schedule(), 3) == 0
    full = empty_schedule()
    for u in range(17):
        full, ok = add_link(full, 3, 1 + (u % 2) * 3, (u, 0))
        assert ok
    assert tx_slot_count(full, 3) == 17


random_link = st.tuples(
    st.integers(0, 16), st.integers(0, 1), st.integers(1, 6), st.integers(1, 6)
).filter(lambda t: t[2] != t[3])


@settings(max_examples=200, deadline=None)
@given(links=st.lists(random_link, max_size=12), node=st.integers(1, 6), dst=st.integers(1, 6),
       asn=st.integers(0, 2**40))
def test_lookup_matches_bruteforce(links, node, dst, asn):
    s = empty_schedule()
    for u, ch, a, b in links:
        s, _ = add_link(s, a, b, (u, ch))
    entries = [(e.u, e.ch, e.src, e.dst) for e in s.entries]
    got = lookup_next(s, node, dst, asn)
    want = brute_lookup(entries, node, dst, asn, 17)
    assert got == (None if want is None else want[1])
    if got is not None:
        assert 0 <= (got.u - asn % 17) % 17 < 17


@settings(max_examples=100, deadline=None)
@given(links=st.lists(random_link, max_size=8, unique_by=lambda t: (t[0], t[1])))
def test_feasibility_is_order_independent(links):
    expect = brute_feasible(links)
    for order in itertools.islice(itertools.permutations(links), 24):
        s = empty_schedule()
        accepted = 0
        for u, ch, a, b in order:
            s, ok = add_link(s, a, b, (u, ch))
            accepted += ok
        assert (accepted == len(links)) == expect


@settings(max_examples=100, deadline=None)
@given(links=st.lists(random_link, max_size=10), new=random_link)
def test_add_then_remove_is_identity(links, new):
    s = empty_schedule()
    for u, ch, a, b in links:
        s, _ = add_link(s, a, b, (u, ch))
    u, ch, a, b = new
    s2, ok = add_link(s, a, b, (u, ch))
    if ok:
        s3, removed = remove_link(s2, (u, ch), b)
        assert removed and s3.entries == s.entries


def test_schedule_file_roundtrip(tmp_path):
    rng = random.Random(3)
    s = empty_schedule()
    for _ in range(20):
        s, _ = add_link(s, rng.randint(1, 10), rng.randint(1, 10), (rng.randrange(17), rng.randrange(2)))
    path = tmp_path / "s.json"
    save_schedule(s, path)
    assert load_schedule(path) == s
    save_schedule(load_schedule(path), tmp_path / "t.json")
    assert path.read_bytes() == (tmp_path / "t.json").read_bytes()
