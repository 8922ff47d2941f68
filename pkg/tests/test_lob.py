import numpy as np
import pytest
from hypothesis import given, strategies as st

from lobmarl.lob import (
    CapacityError, Kind, L2Snapshot, Message, OrderBook, Side, book_tops, init_from_l2,
    l2_snapshot, mid_price, new_book, process_message,
)
from lobmarl.lob.randseq import random_messages
from lobmarl.lob.reference import entries_l2, reference_replay
from lobmarl.lob.types import SYNTH_ID_BASE, TR_AGGR_SIDE, TR_PASSIVE_SEQ, TR_PRICE, TR_QTY


def new(side, price, qty, oid, tid=0, t=0):
    return Message(t, Kind.NEW_LIMIT, side, price, qty, oid, tid)


def run(book, *msgs):
    trades = []
    for m in msgs:
        trades += book.process(m)
    return trades


# -- construction ---------------------------------------------------------------
def test_new_book_capacity_100():
    b = new_book(100)
    assert b.capacity == 100 and len(b) == 0 and b.next_seq == 0
    assert b.orders.shape[:2] == (2, 100)


def test_new_book_capacity_1():
    b = new_book(1)
    assert b.capacity == 1 and len(b) == 0


def test_new_book_capacity_0_rejected():
    with pytest.raises(CapacityError):
        new_book(0)


def test_init_from_empty_snapshot():
    assert len(init_from_l2(new_book(10), L2Snapshot.empty())) == 0


def test_init_from_two_bid_levels():
    b = init_from_l2(new_book(10), L2Snapshot([(1000, 5), (999, 7)], []))
    rows = b.side_orders(Side.BID)
    assert len(rows) == 2
    assert book_tops(b) == (1000, None)
    assert tuple(rows[0, :2]) == (1000, 5)
    assert np.all(rows[:, 3] == 0)  # trader id 0
    # arrival sequence assigned best price first
    assert rows[0, 4] < rows[1, 4]


def test_init_deeper_than_capacity_rejected():
    snap = L2Snapshot([(1000 - i, 1) for i in range(101)], [])
    with pytest.raises(CapacityError):
        init_from_l2(new_book(100), snap)


def test_init_from_l2_returns_new_book():
    b = new_book(10)
    b2 = init_from_l2(b, L2Snapshot([(1000, 5)], [(1001, 5)]))
    assert len(b) == 0 and len(b2) == 2


# -- matching ---------------------------------------------------------------------
def test_resting_bid_no_trades():
    b, trades = process_message(new_book(10), new(Side.BID, 1000, 5, 1))
    assert trades == [] and book_tops(b) == (1000, None)


def test_cross_two_resting_asks_price_time():
    b = new_book(10)
    run(b, new(Side.ASK, 1000, 5, 1), new(Side.ASK, 1000, 3, 2))
    trades = b.process(new(Side.BID, 1001, 6, 3))
    assert [(t.price, t.quantity, t.passive_seq) for t in trades] == [(1000, 5, 0), (1000, 1, 1)]
    assert b.l2(5) == L2Snapshot([], [(1000, 2)])
    assert all(t.aggressor_side == Side.BID for t in trades)


def test_unmatched_remainder_rests():
    b = new_book(10)
    run(b, new(Side.ASK, 1000, 5, 1))
    b.process(new(Side.BID, 1001, 8, 2))
    assert b.l2(5) == L2Snapshot([(1001, 3)], [])


def test_delete_absent_is_noop():
    b = new_book(10)
    run(b, new(Side.BID, 1000, 5, 1))
    before = b.copy()
    trades = b.process(Message(0, Kind.DELETE, Side.BID, 1000, 0, 99))
    assert trades == []
    assert np.array_equal(b.orders, before.orders) and np.array_equal(b.counts, before.counts)
    assert b.missing_refs == 1


def test_cancel_partial_and_delete_and_execute():
    b = new_book(10)
    run(b, new(Side.BID, 1000, 5, 1), new(Side.BID, 999, 4, 2), new(Side.ASK, 1003, 9, 3))
    b.process(Message(0, Kind.CANCEL_PARTIAL, Side.BID, 1000, 2, 1))
    assert b.l2(5).bids.tolist() == [[1000, 3], [999, 4]]
    b.process(Message(0, Kind.DELETE, Side.BID, 999, 0, 2))
    assert b.l2(5).bids.tolist() == [[1000, 3]]
    trades = b.process(Message(0, Kind.EXECUTE_VISIBLE, Side.ASK, 1003, 4, 3))
    assert trades == []  # replay executions only consume quantity
    assert b.l2(5).asks.tolist() == [[1003, 5]]


@pytest.mark.parametrize("kind", [Kind.EXECUTE_HIDDEN, Kind.CROSS, Kind.HALT])
def test_noop_kinds(kind):
    b = new_book(10)
    run(b, new(Side.BID, 1000, 5, 1))
    before = b.copy()
    assert b.process(Message(0, kind, Side.BID, 1000, 5, 1)) == []
    assert np.array_equal(b.orders, before.orders)


def test_eviction_worst_price_when_full():
    b = new_book(2)
    run(b, new(Side.BID, 1000, 1, 1), new(Side.BID, 998, 1, 2))
    b.process(new(Side.BID, 999, 1, 3))
    assert b.l2(5).bids[:, 0].tolist() == [1000, 999] and b.evicted == 1
    b.process(new(Side.BID, 990, 1, 4))  # not strictly better than the worst: dropped
    assert b.l2(5).bids[:, 0].tolist() == [1000, 999] and b.dropped == 1


def test_eviction_tie_takes_oldest():
    b = new_book(2)
    run(b, new(Side.ASK, 1005, 1, 1), new(Side.ASK, 1005, 2, 2))
    b.process(new(Side.ASK, 1004, 3, 3))
    assert sorted(b.side_orders(Side.ASK)[:, 2].tolist()) == [2, 3]


# -- queries ------------------------------------------------------------------------
def test_tops_empty():
    assert book_tops(new_book(5)) == (None, None)


def test_tops_one_side():
    b = new_book(5)
    run(b, new(Side.BID, 1000, 5, 1))
    assert book_tops(b) == (1000, None)


def test_tops_both_sides():
    b = new_book(5)
    run(b, new(Side.BID, 999, 1, 1), new(Side.BID, 1000, 1, 2), new(Side.ASK, 1002, 1, 3))
    assert book_tops(b) == (1000, 1002)


def test_mid_integer_and_half_tick():
    b = new_book(5)
    run(b, new(Side.BID, 1000, 1, 1), new(Side.ASK, 1002, 1, 2))
    assert mid_price(b, 0) == 2002
    b2 = new_book(5)
    run(b2, new(Side.BID, 1000, 1, 1), new(Side.ASK, 1001, 1, 2))
    assert mid_price(b2, 0) == 2001


def test_mid_fallback_and_one_side():
    assert mid_price(new_book(5), 2002) == 2002
    b = new_book(5)
    run(b, new(Side.ASK, 1003, 1, 1))
    assert mid_price(b, 0) == 2006


def test_l2_empty_and_aggregation_and_depth():
    assert l2_snapshot(new_book(5), 5) == L2Snapshot.empty()
    b = new_book(10)
    run(b, new(Side.BID, 1000, 5, 1), new(Side.BID, 1000, 5, 2))
    assert b.l2(5).bids.tolist() == [[1000, 10]]
    run(b, new(Side.ASK, 1003, 1, 3), new(Side.ASK, 1001, 2, 4), new(Side.ASK, 1002, 3, 5))
    assert b.l2(2).asks.tolist() == [[1001, 2], [1002, 3]]


def test_l2_depth_must_be_positive():
    with pytest.raises(ValueError):
        new_book(5).l2(0)


def test_self_trade_allowed_by_default():
    b = new_book(5)
    run(b, new(Side.ASK, 1000, 5, 1, tid=1))
    trades = b.process(new(Side.BID, 1000, 5, 2, tid=1))
    assert len(trades) == 1 and trades[0].passive_trader_id == trades[0].aggressor_trader_id == 1


def test_process_message_does_not_mutate_input():
    b = new_book(5)
    b2, _ = process_message(b, new(Side.BID, 1000, 5, 1))
    assert len(b) == 0 and len(b2) == 1


# -- properties -------------------------------------------------------------------------
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 3000))
def test_matches_reference_matcher(seed, n):
    msgs = random_messages(n, seed)
    b = OrderBook(4096)
    trades, _, _ = b.apply(msgs)
    ref_trades, entries = reference_replay(np.zeros((0, 6), dtype=np.int64), msgs)
    assert b.evicted == 0 and b.dropped == 0
    assert np.array_equal(trades, ref_trades)
    assert b.l2(4096) == entries_l2(entries)


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 2000))
def test_conservation_and_priority(seed, n):
    msgs = random_messages(n, seed)
    b = OrderBook(4096)
    for row in msgs:
        before = sum(int(b.side_orders(s)[:, 1].sum()) for s in (Side.BID, Side.ASK))
        trades, _, _ = b.apply(row[None, :])
        after = sum(int(b.side_orders(s)[:, 1].sum()) for s in (Side.BID, Side.ASK))
        traded = int(trades[:, TR_QTY].sum())
        kind, side, qty = int(row[1]), int(row[2]), int(row[4])
        if kind == Kind.NEW_LIMIT:
            # aggressor fill equals the passive fills; the rest rests
            assert traded <= qty
            assert after - before == qty - 2 * traded
            if len(trades) > 1:
                prices = trades[:, TR_PRICE]
                if side == 1:
                    assert np.all(np.diff(prices) >= 0)
                else:
                    assert np.all(np.diff(prices) <= 0)
                for a, c in zip(trades[:-1], trades[1:]):
                    if a[TR_PRICE] == c[TR_PRICE]:
                        assert a[TR_PASSIVE_SEQ] < c[TR_PASSIVE_SEQ]
            assert np.all(trades[:, TR_AGGR_SIDE] == side)
        else:
            assert traded == 0 and after <= before
        assert np.all(trades[:, TR_QTY] > 0)


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 1500), oid=st.integers(1, 2**40))
def test_absent_id_events_are_bit_identical_noops(seed, n, oid):
    msgs = random_messages(n, seed)
    b = OrderBook(4096)
    b.apply(msgs)
    live = set(b.side_orders(Side.BID)[:, 2].tolist()) | set(b.side_orders(Side.ASK)[:, 2].tolist())
    oid = oid + 10**15  # far from every id the generator hands out
    assert oid not in live
    for kind in (Kind.DELETE, Kind.CANCEL_PARTIAL, Kind.EXECUTE_VISIBLE):
        before = b.copy()
        b.process(Message(0, kind, Side.BID, 1000, 3, oid))
        assert np.array_equal(b.orders, before.orders) and np.array_equal(b.counts, before.counts)


@given(seed=st.integers(0, 2**31 - 1), cap=st.integers(1, 40))
def test_capacity_never_exceeded(seed, cap):
    msgs = random_messages(800, seed)
    b = OrderBook(cap)
    for row in msgs:
        b.apply(row[None, :])
        assert b.counts.max() <= cap
        for s in (Side.BID, Side.ASK):
            assert np.all(b.side_orders(s)[:, 1] > 0)


def test_init_ids_in_synthetic_range():
    b = init_from_l2(new_book(10), L2Snapshot([(1000, 5)], [(1001, 5)]))
    ids = np.concatenate([b.side_orders(Side.BID)[:, 2], b.side_orders(Side.ASK)[:, 2]])
    assert np.all(ids >= SYNTH_ID_BASE)
