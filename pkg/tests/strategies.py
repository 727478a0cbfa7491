"""Hypothesis strategies shared by the test modules."""
from hypothesis import strategies as st

from lobphys.lob_core import BUY, CANCEL, CHANGE, MATCH, OPEN, SELL, Book, OrderEvent


def ev(ts, kind, side, price, size, oid):
    return OrderEvent(ts, kind, side, price, size, oid)


@st.composite
def valid_streams(draw):
    """Random non-crossing open/cancel/change/match streams."""
    n = draw(st.integers(1, 60))
    book = Book(strict=True)
    events, live, ts = [], [], 0
    for i in range(n):
        ts += draw(st.integers(0, 50_000))
        choice = draw(st.integers(0, 3))
        if choice == 0 or not live:
            side = draw(st.sampled_from([BUY, SELL]))
            if side is BUY:
                hi = (book.best_ask or 1100) - 1
                price = draw(st.integers(900, max(900, hi)))
                if book.best_ask is not None and price >= book.best_ask:
                    continue
            else:
                lo = (book.best_bid or 900) + 1
                price = draw(st.integers(min(lo, 1100), 1100))
                if book.best_bid is not None and price <= book.best_bid:
                    continue
            e = ev(ts, OPEN, side, price, draw(st.integers(1, 20)), f"o{i}")
            live.append(e.order_id)
        else:
            oid = draw(st.sampled_from(live))
            side, price, size = book.orders[oid]
            if choice == 1:
                e = ev(ts, CANCEL, side, price, size, oid)
            elif choice == 2:
                e = ev(ts, CHANGE, side, price, draw(st.integers(1, size)), oid)
            else:
                e = ev(ts, MATCH, side.opposite, price, draw(st.integers(1, size)), oid)
        book.apply(e.copy())
        live = [o for o in live if o in book.orders]
        events.append(e)
    return events
