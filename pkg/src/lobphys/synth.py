"""Seeded zero-intelligence order flow with a planted reaction depth.

Limit orders arrive as Poisson streams per depth band around a fair value
``f(t) = f0 + drift * t + volatility * W(t)`` (``W`` a standard Brownian
motion); resting orders are cancelled independently at a
per-order rate; market orders arrive at a fixed rate per side. On top of that
background, at the end of every one-second window the generator submits
``coupling * |p*(T) - p*(T - 1s)|`` lots on each side at exactly ``d*`` ticks
outside the quotes in force at the window start, and pulls them again at
once. Reacted volume at ``d*``
therefore co-moves with the absolute match-price change, which makes the
active depth a known quantity.

The generator keeps its own price-time priority book (independent of
:mod:`lobphys.lob_core`) so replaying its output is a genuine cross-check.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterator, Optional

from .errors import InfeasibleConfig, InsufficientLiquidity
from .ingest import Instrument, TickerRecord, write_full_csv, write_ticker_csv
from .lob_core import BUY, CANCEL, CHANGE, MATCH, OPEN, SELL, Book, OrderEvent
from .provenance import config_hash, header_lines

COUPLING = {"none": 0.0, "weak": 8.0, "medium": 40.0, "strong": 160.0}  # lots per tick of |dp*|

MICROS = 1_000_000
DEFAULT_START = 1_600_000_000 * MICROS


@dataclass
class SynthConfig:
    seed: int = 0
    duration: float = 1800.0  # seconds
    tick_size: str = "0.01"
    lot_size: str = "0.001"
    pair: str = "SYN-USD"
    start_micros: int = DEFAULT_START
    fair_value: str = "20000"  # quote units at t = 0
    drift: float = 0.0  # quote units per second
    volatility: float = 0.01  # quote units per sqrt(second)
    # (min depth, max depth, submissions per second per side); depth in ticks from fair value
    bands: list = field(default_factory=lambda: [[1, 10, 20.0], [10, 100, 15.0], [100, 2000, 15.0]])
    cancel_rate: float = 0.2  # per resting order per second
    market_rate: float = 2.0  # per side per second
    limit_size_mean: float = 10.0  # lots
    market_size_mean: float = 10.0
    initial_orders: int = 200  # per side
    active_depth: int = 30  # d*, ticks
    coupling: float = COUPLING["medium"]
    reaction_window: float = 1.0  # seconds
    ticker_sizes: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise InfeasibleConfig(f"unknown synth fields: {sorted(unknown)}")
        cfg = cls(**raw)
        if isinstance(cfg.coupling, str):
            if cfg.coupling not in COUPLING:
                raise InfeasibleConfig(f"coupling must be a number or one of {sorted(COUPLING)}")
            cfg.coupling = COUPLING[cfg.coupling]
        return cfg

    @property
    def instrument(self) -> Instrument:
        return Instrument(Decimal(self.tick_size), Decimal(self.lot_size), self.pair)

    def validate(self) -> None:
        def bad(msg):
            raise InfeasibleConfig(msg)

        if self.duration <= 0:
            bad("duration must be positive")
        try:
            tick, lot = Decimal(self.tick_size), Decimal(self.lot_size)
            f0 = Decimal(self.fair_value)
        except Exception:
            bad("tick_size, lot_size and fair_value must be decimal strings")
        if tick <= 0 or lot <= 0:
            bad("tick_size and lot_size must be positive")
        if (f0 / tick) != (f0 / tick).to_integral_value():
            bad("fair_value must be a multiple of tick_size")
        f0_ticks = int(f0 / tick)
        for b in self.bands:
            if len(b) != 3 or not (1 <= b[0] <= b[1]) or b[2] < 0:
                bad(f"band {b!r} must be [min_depth >= 1, max_depth >= min_depth, rate >= 0]")
        rates = [self.cancel_rate, self.market_rate, self.coupling, self.limit_size_mean,
                 self.market_size_mean]
        if any(r < 0 for r in rates) or self.volatility < 0:
            bad("rates and sizes must be non-negative")
        if self.limit_size_mean < 1 or self.market_size_mean < 1:
            bad("mean order sizes must be at least one lot")
        submit = sum(b[2] for b in self.bands)
        if submit == 0 and (self.initial_orders == 0 and (self.cancel_rate > 0 or self.market_rate > 0)):
            bad("cancel or market orders requested but no order is ever resting")
        if self.initial_orders < 1:
            bad("initial_orders must be >= 1 so both sides of the book are quoted")
        max_depth = max((b[1] for b in self.bands), default=0)
        if not (1 <= self.active_depth < f0_ticks):
            bad("active depth must be at least one tick and below the fair value")
        if max_depth >= f0_ticks:
            bad("band depths reach non-positive prices")
        if self.reaction_window <= 0 or (self.reaction_window * MICROS) % 1:
            bad("reaction_window must be a positive whole number of microseconds")
        if self.start_micros % int(self.reaction_window * MICROS):
            bad("start_micros must sit on the reaction window grid")


@dataclass
class SynthResult:
    events: list
    tickers: list
    manifest: dict


class _Book:
    """Price-time priority book for the generator."""

    def __init__(self):
        self.levels = ({}, {})  # side index 0 = bid, 1 = ask: price -> deque of order ids
        self.qty = ({}, {})  # price -> total lots
        self.heaps = ([], [])  # bid heap holds negated prices
        self.total = [0, 0]
        self.orders = {}  # id -> [side_idx, price, size]
        self.live = []
        self.pos = {}

    def best(self, s: int) -> Optional[int]:
        h, lv = self.heaps[s], self.levels[s]
        while h and (-h[0] if s == 0 else h[0]) not in lv:
            heapq.heappop(h)
        if not h:
            return None
        return -h[0] if s == 0 else h[0]

    def add(self, oid: str, s: int, price: int, size: int) -> None:
        lv = self.levels[s]
        q = lv.get(price)
        if q is None:
            lv[price] = q = deque()
            self.qty[s][price] = 0
            heapq.heappush(self.heaps[s], -price if s == 0 else price)
        q.append(oid)
        self.qty[s][price] += size
        self.total[s] += size
        self.orders[oid] = [s, price, size]
        self.pos[oid] = len(self.live)
        self.live.append(oid)

    def _unlink(self, oid: str) -> None:
        i = self.pos.pop(oid)
        last = self.live.pop()
        if last != oid:
            self.live[i] = last
            self.pos[last] = i
        del self.orders[oid]

    def reduce(self, oid: str, amount: int) -> None:
        s, price, size = order = self.orders[oid]
        self.qty[s][price] -= amount
        self.total[s] -= amount
        if amount >= size:
            q = self.levels[s][price]
            if q[0] == oid:
                q.popleft()
            else:
                q.remove(oid)
            if not q:
                del self.levels[s][price]
                del self.qty[s][price]
            self._unlink(oid)
        else:
            order[2] = size - amount

    def count(self, s: int) -> int:
        return sum(len(q) for q in self.levels[s].values())


class _Generator:
    def __init__(self, cfg: SynthConfig):
        cfg.validate()
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        inst = cfg.instrument
        self.f0 = int(Decimal(cfg.fair_value) / inst.tick_size)
        self.drift_ticks = float(Decimal(repr(cfg.drift)) / inst.tick_size)
        self.vol_ticks = float(Decimal(repr(cfg.volatility)) / inst.tick_size)
        self.walk = 0.0
        self.book = _Book()
        self.next_id = 0
        self.p_star = None
        self.band_rates = [b[2] for b in cfg.bands]
        self.submit_rate = sum(self.band_rates)

    # -- helpers ---------------------------------------------------------
    def _oid(self) -> str:
        self.next_id += 1
        return f"{self.cfg.seed:x}-{self.next_id:08x}"

    def _size(self, mean: float) -> int:
        if mean <= 1:
            return 1
        return 1 + int(self.rng.expovariate(1.0 / (mean - 1)))

    def _depth(self) -> int:
        r = self.rng.random() * self.submit_rate
        for (lo, hi, rate) in self.cfg.bands:
            if r < rate:
                break
            r -= rate
        # log-uniform over [lo, hi]
        return min(hi, int(lo * math.exp(self.rng.random() * math.log((hi + 1) / lo))))

    def _fair(self, t: float) -> int:
        return self.f0 + int(round(self.drift_ticks * t + self.walk))

    def _advance(self, step: float) -> None:
        if self.vol_ticks and step > 0:
            self.walk += self.rng.gauss(0.0, self.vol_ticks * math.sqrt(step))

    def _ticker(self, ts: int) -> TickerRecord:
        bk = self.book
        b, a = bk.best(0), bk.best(1)
        if self.cfg.ticker_sizes:
            return TickerRecord(ts, b, a, self.p_star, bk.qty[0][b], bk.qty[1][a])
        return TickerRecord(ts, b, a, self.p_star)

    def _open(self, ts: int, s: int, price: int, size: int, oid: Optional[str] = None):
        oid = oid or self._oid()
        self.book.add(oid, s, price, size)
        yield ("E", OrderEvent(ts, OPEN, BUY if s == 0 else SELL, price, size, oid))

    def _take(self, ts: int, taker: int, size: int, limit: Optional[int]):
        """Consume the side opposite ``taker`` up to ``limit``; leaves at least one lot."""
        bk = self.book
        opp = 1 - taker
        size = min(size, bk.total[opp] - 1)
        side = BUY if taker == 0 else SELL
        while size > 0:
            px = bk.best(opp)
            if limit is not None and (px > limit if taker == 0 else px < limit):
                break
            maker = bk.levels[opp][px][0]
            take = min(size, bk.orders[maker][2])
            bk.reduce(maker, take)
            size -= take
            self.p_star = px
            yield ("E", OrderEvent(ts, MATCH, side, px, take, maker))
            yield ("T", self._ticker(ts))

    # -- event types -----------------------------------------------------
    def _limit(self, ts: int, t: float, s: int):
        depth = self._depth()
        f = self._fair(t)
        price = f - depth if s == 0 else f + depth
        size = self._size(self.cfg.limit_size_mean)
        bk = self.book
        opp_best = bk.best(1 - s)
        marketable = opp_best is not None and (price >= opp_best if s == 0 else price <= opp_best)
        oid = self._oid()
        if marketable and self.cfg.market_rate == 0:
            # no marketable flow at all: rest one tick behind the opposite best instead
            price = opp_best - 1 if s == 0 else opp_best + 1
            if price <= 0:
                return
            marketable = False
        if marketable:
            before = size
            fills = list(self._take(ts, s, size, price))
            yield from fills
            size = before - sum(r.size for k, r in fills if k == "E")
            opp_best = bk.best(1 - s)
            if size <= 0 or (opp_best is not None and (price >= opp_best if s == 0 else price <= opp_best)):
                return
        yield from self._open(ts, s, price, size, oid)

    def _market(self, ts: int, s: int):
        yield from self._take(ts, s, self._size(self.cfg.market_size_mean), None)

    def _cancel(self, ts: int):
        bk = self.book
        oid = bk.live[int(self.rng.random() * len(bk.live))]
        s, price, size = bk.orders[oid]
        q = bk.levels[s]
        if len(q) == 1 and len(q[price]) == 1:
            return  # keep both sides quoted
        bk.reduce(oid, size)
        yield ("E", OrderEvent(ts, CANCEL, BUY if s == 0 else SELL, price, size, oid))

    def _react(self, ts: int, refs, dp: int):
        cfg = self.cfg
        vol = int(round(cfg.coupling * abs(dp)))
        if vol <= 0 or refs is None:
            return
        bk = self.book
        ref_b, ref_a = refs
        buy_px, sell_px = ref_b - cfg.active_depth, ref_a + cfg.active_depth
        best_a, best_b = bk.best(1), bk.best(0)
        # the planted orders are pulled straight away so they never go stale in the book
        if buy_px > 0 and (best_a is None or buy_px < best_a):
            oid = self._oid()
            yield ("E", OrderEvent(ts, OPEN, BUY, buy_px, vol, oid))
            yield ("E", OrderEvent(ts, CANCEL, BUY, buy_px, vol, oid))
        if best_b is None or sell_px > best_b:
            oid = self._oid()
            yield ("E", OrderEvent(ts, OPEN, SELL, sell_px, vol, oid))
            yield ("E", OrderEvent(ts, CANCEL, SELL, sell_px, vol, oid))

    # -- main loop ---------------------------------------------------------
    def run(self) -> Iterator[tuple]:
        cfg = self.cfg
        rng = self.rng
        start = cfg.start_micros
        win = int(cfg.reaction_window * MICROS)
        end = start + int(round(cfg.duration * MICROS))
        f = self.f0
        # seed both sides, alternating so the book is quoted early
        for _ in range(cfg.initial_orders):
            for s in (0, 1):
                d = self._depth()
                yield from self._open(start, s, f - d if s == 0 else f + d, self._size(cfg.limit_size_mean))
        yield ("T", TickerRecord(start, self.book.best(0), self.book.best(1), f,
                                 self.book.qty[0][self.book.best(0)] if cfg.ticker_sizes else None,
                                 self.book.qty[1][self.book.best(1)] if cfg.ticker_sizes else None))
        t = 0.0
        t_next = start + win
        refs = (self.book.best(0), self.book.best(1))
        p_prev = self.p_star
        lim_rate = 2 * self.submit_rate
        mkt_rate = 2 * cfg.market_rate
        kappa = cfg.cancel_rate
        bk = self.book
        while True:
            total = lim_rate + mkt_rate + kappa * len(bk.live)
            step = rng.expovariate(total) if total > 0 else math.inf
            ts = start + math.ceil((t + step) * MICROS)
            if ts > t_next or ts > end:
                if t_next > end:
                    break
                # window boundary: plant the reaction, then snapshot the next window's refs
                t_b = (t_next - start) / MICROS
                self._advance(t_b - t)
                t = t_b
                if p_prev is not None and self.p_star is not None:
                    yield from self._react(t_next, refs, self.p_star - p_prev)
                refs = (bk.best(0), bk.best(1))
                p_prev = self.p_star
                t_next += win
                continue
            t += step
            self._advance(step)
            u = rng.random() * total
            if u < lim_rate:
                yield from self._limit(ts, t, 0 if u < lim_rate / 2 else 1)
            elif u < lim_rate + mkt_rate:
                yield from self._market(ts, 0 if u - lim_rate < mkt_rate / 2 else 1)
            else:
                yield from self._cancel(ts)


def stream(cfg: SynthConfig) -> Iterator[tuple]:
    """Yield ``("E", OrderEvent)`` and ``("T", TickerRecord)`` in emission order."""
    return _Generator(cfg).run()


def manifest_for(cfg: SynthConfig, counts: dict) -> dict:
    from . import __version__

    return {
        "tool_version": __version__,
        "config_hash": config_hash(cfg.to_dict()),
        "tick_size": cfg.tick_size,
        "lot_size": cfg.lot_size,
        "pair": cfg.pair,
        "seed": cfg.seed,
        "d_star_ticks": cfg.active_depth,
        "drift": cfg.drift,
        "volatility": cfg.volatility,
        "coupling": cfg.coupling,
        "duration_seconds": cfg.duration,
        "start_micros": cfg.start_micros,
        "config": cfg.to_dict(),
        "counts": counts,
        "files": {"full": "full.csv", "ticker": "ticker.csv"},
    }


def generate(cfg: SynthConfig, out_dir=None) -> SynthResult:
    """Run the generator in memory; with ``out_dir`` also write the fixture files."""
    events, tickers = [], []
    for kind, rec in stream(cfg):
        (events if kind == "E" else tickers).append(rec)
    counts = _counts(events, tickers)
    manifest = manifest_for(cfg, counts)
    if out_dir is not None:
        _write(out_dir, cfg, events, tickers, manifest)
    return SynthResult(events, tickers, manifest)


def write_stream(cfg: SynthConfig, out_dir) -> dict:
    """Generate straight to disk without holding the event list (for large runs)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comments = header_lines("synth", cfg.to_dict())
    counts = {"events": 0, "tickers": 0, "open": 0, "cancel": 0, "match": 0, "change": 0}
    with open(out / "full.csv", "w", encoding="utf-8", newline="\n") as ff, \
            open(out / "ticker.csv", "w", encoding="utf-8", newline="\n") as tf:
        from .ingest import TICKER_HEADER, FULL_HEADER, format_full_row, format_ticker_row, write_comments

        write_comments(ff, comments)
        ff.write(FULL_HEADER + "\n")
        write_comments(tf, comments)
        tf.write(TICKER_HEADER + "\n")
        for kind, rec in stream(cfg):
            if kind == "E":
                ff.write(format_full_row(rec) + "\n")
                counts["events"] += 1
                counts[rec.kind.value] += 1
            else:
                tf.write(format_ticker_row(rec) + "\n")
                counts["tickers"] += 1
    manifest = manifest_for(cfg, counts)
    _dump_manifest(out / "manifest.json", manifest)
    return manifest


def _counts(events, tickers) -> dict:
    counts = {"events": len(events), "tickers": len(tickers), "open": 0, "cancel": 0, "match": 0, "change": 0}
    for ev in events:
        counts[ev.kind.value] += 1
    return counts


def _dump_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write(out_dir, cfg: SynthConfig, events, tickers, manifest) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comments = header_lines("synth", cfg.to_dict())
    with open(out / "full.csv", "w", encoding="utf-8", newline="\n") as fh:
        write_full_csv(events, fh, comments)
    with open(out / "ticker.csv", "w", encoding="utf-8", newline="\n") as fh:
        write_ticker_csv(tickers, fh, comments)
    _dump_manifest(out / "manifest.json", manifest)


# -- shocks ---------------------------------------------------------------

def tickers_by_replay(events, *, since: Optional[int] = None, sizes: bool = True) -> list:
    """Ticker records (book after each match) rebuilt by replaying ``events``.

    Only matches at index ``since`` or later produce a record.
    """
    book = Book(strict=True)
    out = []
    for i, ev in enumerate(events):
        book.apply(ev)
        if ev.kind is MATCH and (since is None or i >= since):
            b, a = book.best_bid, book.best_ask
            out.append(TickerRecord(ev.ts, b, a, ev.price,
                                    book.bids[b] if sizes else None, book.asks[a] if sizes else None))
    return out


def inject_shock(events, at: int, size: int, tickers=None, *, sizes: bool = True):
    """Insert a market buy of ``size`` lots at time ``at``.

    The buy sweeps the ask side in price-time order right after the last
    event stamped ``<= at``. Later events that reference consumed liquidity
    are trimmed or dropped so the stream stays replayable, and ticker records
    from the shock on are rebuilt by replay. Returns ``(events, tickers)``.
    """
    events = [ev.copy() for ev in events]
    if size < 0:
        raise ValueError("shock size must be non-negative")
    if size == 0:
        return events, (list(tickers) if tickers is not None else tickers_by_replay(events, sizes=sizes))
    book = Book(strict=True)
    cut = 0
    while cut < len(events) and events[cut].ts <= at:
        book.apply(events[cut].copy())
        cut += 1
    available = sum(book.asks.values())
    if available < size:
        raise InsufficientLiquidity(f"{available} lots resting on the ask side at {at}, shock needs {size}")
    # FIFO within a level is the order-book insertion order
    asks = [(order[1], i, oid, order[2]) for i, (oid, order) in enumerate(book.orders.items())
            if order[0] is SELL]
    asks.sort()
    shock, deficit, left = [], {}, size
    for price, _, oid, rem in asks:
        if left == 0:
            break
        take = min(left, rem)
        shock.append(OrderEvent(at, MATCH, BUY, price, take, oid))
        deficit[oid] = take
        left -= take

    rest = []
    for ev in shock:
        book.apply(ev.copy())
    for ev in events[cut:]:
        oid = ev.order_id
        if ev.kind is not OPEN and oid in deficit:
            order = book.orders.get(oid)
            if order is None:
                continue  # swept by the shock
            if ev.kind is MATCH and ev.size > order[2]:
                ev.size = order[2]
            elif ev.kind is CHANGE:
                ev.size -= deficit[oid]
                if ev.size <= 0:
                    ev.kind, ev.size = CANCEL, order[2]
            elif ev.kind is CANCEL:
                ev.size = order[2]
        book.apply(ev.copy())
        rest.append(ev)
    out = events[:cut] + shock + rest
    rebuilt = tickers_by_replay(out, since=cut, sizes=sizes)
    if tickers is None:
        before = tickers_by_replay(out[:cut], sizes=sizes)
    else:
        before = [t for t in tickers if t.ts <= at]
    return out, before + rebuilt
