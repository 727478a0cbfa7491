"""Event-sourced limit order book and fixed-interval frame sampling.

Prices are integer tick counts and sizes integer lot counts throughout; the
conversion to quote/base currency happens only at reporting time (see
:class:`lobphys.ingest.Instrument`).
"""
from __future__ import annotations

import enum
import heapq
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional

from .errors import CrossedBook, DuplicateOrderId, EmptyStream, OutOfOrder, UnknownOrderId

logger = logging.getLogger(__name__)


class Side(enum.Enum):
    BUY = "buy"
    SELL = "sell"

    @property
    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


class Kind(enum.Enum):
    OPEN = "open"
    MATCH = "match"
    CANCEL = "cancel"
    CHANGE = "change"


class Aggressiveness(enum.Enum):
    LIMIT = "limit"
    MARKET = "market"


BUY, SELL = Side.BUY, Side.SELL
OPEN, MATCH, CANCEL, CHANGE = Kind.OPEN, Kind.MATCH, Kind.CANCEL, Kind.CHANGE
LIMIT, MARKET = Aggressiveness.LIMIT, Aggressiveness.MARKET


class OrderEvent:
    """One full-channel record.

    For ``MATCH`` the ``side`` is the taker side and ``order_id`` the resting
    (maker) order. For ``CHANGE`` the ``size`` is the new remaining size.

    Replay fills in the derived fields: ``aggressiveness``, ``prev_size``
    (remaining size before a change or cancel), ``orphan`` (the event
    referenced an order the book never saw) and, after channel merging,
    ``ticker`` (latest ticker record at or before ``ts``).
    """

    __slots__ = ("ts", "kind", "side", "price", "size", "order_id",
                 "aggressiveness", "prev_size", "orphan", "ticker")

    def __init__(self, ts: int, kind: Kind, side: Side, price: int, size: int,
                 order_id: str, aggressiveness: Optional[Aggressiveness] = None):
        self.ts = ts
        self.kind = kind
        self.side = side
        self.price = price
        self.size = size
        self.order_id = order_id
        self.aggressiveness = aggressiveness
        self.prev_size = None
        self.orphan = False
        self.ticker = None

    def copy(self) -> "OrderEvent":
        ev = OrderEvent(self.ts, self.kind, self.side, self.price, self.size,
                        self.order_id, self.aggressiveness)
        ev.prev_size = self.prev_size
        ev.orphan = self.orphan
        ev.ticker = self.ticker
        return ev

    def key(self) -> tuple:
        return (self.ts, self.kind, self.side, self.price, self.size, self.order_id)

    def __eq__(self, other):
        if not isinstance(other, OrderEvent):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return (f"OrderEvent(ts={self.ts}, kind={self.kind.value}, side={self.side.value}, "
                f"price={self.price}, size={self.size}, order_id={self.order_id!r})")


@dataclass(frozen=True)
class BookState:
    """Immutable top-of-book snapshot. Ladders are included only on request."""

    best_bid: Optional[int]
    best_ask: Optional[int]
    p_star: Optional[int]
    last_match_ts: Optional[int]
    bid_ladder: Optional[dict] = field(default=None, compare=False)
    ask_ladder: Optional[dict] = field(default=None, compare=False)

    @property
    def midprice(self) -> Optional[Fraction]:
        if self.best_bid is None or self.best_ask is None:
            return None
        return Fraction(self.best_bid + self.best_ask, 2)


class Book:
    """Mutable price-level book keyed by order id.

    ``strict`` makes orphan events (cancel/change/match of an order never
    seen) raise :class:`UnknownOrderId`; the default lenient mode counts them
    in ``orphans`` and skips their book effect. A crossed book is always an
    error.
    """

    __slots__ = ("bids", "asks", "orders", "_bid_heap", "_ask_heap",
                 "p_star", "last_match_ts", "strict", "orphans", "n_applied")

    def __init__(self, strict: bool = False):
        self.bids: dict[int, int] = {}
        self.asks: dict[int, int] = {}
        self.orders: dict[str, list] = {}
        self._bid_heap: list[int] = []  # negated prices, lazily pruned
        self._ask_heap: list[int] = []
        self.p_star: Optional[int] = None
        self.last_match_ts: Optional[int] = None
        self.strict = strict
        self.orphans = 0
        self.n_applied = 0

    # -- top of book ---------------------------------------------------
    @property
    def best_bid(self) -> Optional[int]:
        h, levels = self._bid_heap, self.bids
        while h and -h[0] not in levels:
            heapq.heappop(h)
        return -h[0] if h else None

    @property
    def best_ask(self) -> Optional[int]:
        h, levels = self._ask_heap, self.asks
        while h and h[0] not in levels:
            heapq.heappop(h)
        return h[0] if h else None

    @property
    def midprice(self) -> Optional[Fraction]:
        b, a = self.best_bid, self.best_ask
        if b is None or a is None:
            return None
        return Fraction(b + a, 2)

    def state(self, ladders: bool = False) -> BookState:
        return BookState(self.best_bid, self.best_ask, self.p_star, self.last_match_ts,
                         dict(self.bids) if ladders else None,
                         dict(self.asks) if ladders else None)

    def level_size(self, side: Side, price: int) -> int:
        return (self.bids if side is BUY else self.asks).get(price, 0)

    # -- mutation ------------------------------------------------------
    def _add_level(self, side: Side, price: int, size: int) -> None:
        if side is BUY:
            levels, heap, key = self.bids, self._bid_heap, -price
        else:
            levels, heap, key = self.asks, self._ask_heap, price
        cur = levels.get(price)
        if cur is None:
            levels[price] = size
            heapq.heappush(heap, key)
            if len(heap) > 4 * len(levels) + 64:
                # stale entries only accumulate for re-created levels
                heap[:] = [-p for p in levels] if side is BUY else list(levels)
                heapq.heapify(heap)
        else:
            levels[price] = cur + size

    def _remove_size(self, side: Side, price: int, size: int) -> None:
        levels = self.bids if side is BUY else self.asks
        left = levels[price] - size
        if left > 0:
            levels[price] = left
        else:
            del levels[price]

    def _orphan(self, ev: OrderEvent) -> None:
        ev.orphan = True
        if self.strict:
            raise UnknownOrderId(ev.order_id, ev.kind.value)
        self.orphans += 1

    def apply(self, ev: OrderEvent) -> None:
        """Apply one event in place. See :func:`apply_event`."""
        kind = ev.kind
        self.n_applied += 1
        if kind is OPEN:
            if ev.order_id in self.orders:
                if self.strict:
                    raise DuplicateOrderId(ev.order_id)
                ev.orphan = True
                self.orphans += 1
                return
            if ev.size <= 0:
                return
            if ev.side is BUY:
                ask = self.best_ask
                if ask is not None and ev.price >= ask:
                    raise CrossedBook(ev.price, ask, ev.ts)
            else:
                bid = self.best_bid
                if bid is not None and ev.price <= bid:
                    raise CrossedBook(bid, ev.price, ev.ts)
            self.orders[ev.order_id] = [ev.side, ev.price, ev.size]
            self._add_level(ev.side, ev.price, ev.size)
        elif kind is CANCEL:
            order = self.orders.pop(ev.order_id, None)
            if order is None:
                self._orphan(ev)
                return
            side, price, remaining = order
            self._remove_size(side, price, remaining)
            # statistics use the size still resting when the cancel lands
            ev.prev_size = remaining
            ev.size = remaining
            ev.price = price
            ev.side = side
        elif kind is MATCH:
            self.p_star = ev.price
            self.last_match_ts = ev.ts
            order = self.orders.get(ev.order_id)
            if order is None:
                self._orphan(ev)
                return
            side, price, remaining = order
            take = ev.size if ev.size < remaining else remaining
            if ev.size > remaining and self.strict:
                raise UnknownOrderId(ev.order_id, "overfilled match")
            self._remove_size(side, price, take)
            if remaining - take > 0:
                order[2] = remaining - take
            else:
                del self.orders[ev.order_id]
        elif kind is CHANGE:
            order = self.orders.get(ev.order_id)
            if order is None:
                self._orphan(ev)
                return
            side, price, remaining = order
            ev.prev_size = remaining
            ev.price = price
            ev.side = side
            delta = ev.size - remaining
            if delta > 0:
                self._add_level(side, price, delta)
            elif delta < 0:
                self._remove_size(side, price, -delta)
            if ev.size > 0:
                order[2] = ev.size
            else:
                del self.orders[ev.order_id]
        else:  # pragma: no cover
            raise ValueError(f"unknown event kind {kind!r}")


def apply_event(book: Book, ev: OrderEvent) -> Book:
    """Apply ``ev`` to ``book`` and return the same book.

    Open adds the order; Cancel removes its remaining size; Match decrements
    the maker and records the match price; Change sets a new remaining size.
    Emptied levels are deleted.
    """
    book.apply(ev)
    return book


def classify_aggressiveness(ev: OrderEvent, book: Book) -> Aggressiveness:
    """Market if the event is a match taker or a marketable quote, else Limit.

    ``book`` must reflect the state immediately before ``ev``.
    """
    if ev.kind is MATCH:
        return MARKET
    if ev.side is BUY:
        ask = book.best_ask
        return MARKET if ask is not None and ev.price >= ask else LIMIT
    bid = book.best_bid
    return MARKET if bid is not None and ev.price <= bid else LIMIT


def depth_of(ref_bid: int, ref_ask: int, side: Side, price: int) -> int:
    """Signed tick distance from the same-side reference quote.

    Negative when the price sits inside the spread.
    """
    if side is BUY:
        return ref_bid - price
    return price - ref_ask


@dataclass(slots=True)
class Frame:
    """Events in ``(t_end - dt, t_end]`` with the quotes in force at ``t_end - dt``."""

    t_end: int
    dt: int
    ref_bid: Optional[int]
    ref_ask: Optional[int]
    ref_p_star: Optional[int]
    events: list
    p_star: Optional[int] = None  # last match price at t_end

    @property
    def has_refs(self) -> bool:
        return self.ref_bid is not None and self.ref_ask is not None


def _ceil_to_grid(ts: int, dt: int) -> int:
    return -(-ts // dt) * dt


def sample_frames(events: Iterable[OrderEvent], dt: int, *, book: Optional[Book] = None,
                  quotes: str = "book", strict: bool = False) -> Iterator[Frame]:
    """Replay ``events`` and partition them into frames of width ``dt`` micros.

    Frame boundaries sit on multiples of ``dt`` since the epoch. Every event
    lands in exactly one frame; frames without events are still emitted so the
    output is a regular grid. Reference quotes come from the replayed book
    (``quotes="book"``) or from the ticker attached by channel merging
    (``quotes="ticker"``).

    Each event's ``aggressiveness`` is set from the book just before it.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if quotes not in ("book", "ticker"):
        raise ValueError(f"quotes must be 'book' or 'ticker', got {quotes!r}")
    if book is None:
        book = Book(strict=strict)
    use_ticker = quotes == "ticker"
    it = iter(events)
    first = next(it, None)
    if first is None:
        raise EmptyStream("no events to sample")

    t_end = _ceil_to_grid(first.ts, dt)
    ticker = None

    def refs():
        if use_ticker:
            if ticker is None:
                return None, None
            return ticker.best_bid, ticker.best_ask
        return book.best_bid, book.best_ask

    ref_bid, ref_ask = refs()
    ref_p = book.p_star
    buf: list = []
    apply = book.apply
    last_ts = first.ts
    ev = first
    while ev is not None:
        ts = ev.ts
        while ts > t_end:
            yield Frame(t_end, dt, ref_bid, ref_ask, ref_p, buf, book.p_star)
            buf = []
            t_end += dt
            ref_bid, ref_ask = refs()
            ref_p = book.p_star
        if ts < last_ts:
            raise OutOfOrder(f"events out of order: {ts} after {last_ts}")
        last_ts = ts
        # inlined classify_aggressiveness; this loop is the replay hot path
        if ev.kind is MATCH:
            ev.aggressiveness = MARKET
        elif ev.side is BUY:
            ask = book.best_ask
            ev.aggressiveness = MARKET if ask is not None and ev.price >= ask else LIMIT
        else:
            bid = book.best_bid
            ev.aggressiveness = MARKET if bid is not None and ev.price <= bid else LIMIT
        apply(ev)
        if use_ticker and ev.ticker is not None:
            ticker = ev.ticker
        buf.append(ev)
        ev = next(it, None)
    yield Frame(t_end, dt, ref_bid, ref_ask, ref_p, buf, book.p_star)


def replay(events: Iterable[OrderEvent], *, strict: bool = False) -> Book:
    """Apply a whole stream and return the final book."""
    book = Book(strict=strict)
    for ev in events:
        book.apply(ev)
    return book
