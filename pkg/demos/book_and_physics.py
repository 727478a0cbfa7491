"""Replay a handful of orders and watch energy and momentum respond.

Run: python demos/book_and_physics.py
"""
from fractions import Fraction

from lobphys.lob_core import BUY, CANCEL, MATCH, OPEN, SELL, Book, OrderEvent
from lobphys.physics import physics_series

TICK = Fraction(1, 100)


def show(label, book):
    print(f"{label:<34} bid {book.best_bid}  ask {book.best_ask}  last trade {book.p_star}")


# A two-sided book: bid 100.00 x 5, ask 100.02 x 7 (prices in ticks of 0.01).
events = [
    OrderEvent(50_000, OPEN, BUY, 10000, 5, "bid-1"),
    OrderEvent(50_000, OPEN, SELL, 10002, 7, "ask-1"),
]
book = Book()
for ev in events:
    book.apply(ev.copy())
show("after the opening quotes", book)

# A taker buy lifts 3 lots from the ask; the maker order shrinks to 4.
trade = OrderEvent(120_000, MATCH, BUY, 10002, 3, "ask-1")
book.apply(trade.copy())
show("after a 3-lot taker buy", book)
print("ask ladder:", dict(book.asks))

# With an active depth of 50 ticks the active bid sits at 99.50. A 2-lot buy
# at 99.80 is 30 ticks above it: over a 0.1 s frame that is 3.0 quote units/s,
# so it adds 2 * 3.0 = 6 to momentum and 0.5 * 2 * 3.0**2 = 9 to energy.
probe = [OrderEvent(150_000, OPEN, BUY, 9980, 2, "probe")]
series = physics_series([e.copy() for e in events + probe], alpha=50, dt=100_000, tick_size=TICK)
print("\nsubmit only:      momentum", series.p_incr[-1], " energy", series.e_incr[-1])

# Pulling the same order inside the frame cancels the momentum but not the energy.
pulled = probe + [OrderEvent(160_000, CANCEL, BUY, 9980, 2, "probe")]
series = physics_series([e.copy() for e in events + pulled], alpha=50, dt=100_000, tick_size=TICK)
print("submit + cancel:  momentum", series.p_incr[-1], " energy", series.e_incr[-1])
