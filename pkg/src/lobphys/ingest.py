"""Readers and writers for full-channel and ticker-channel captures.

Two input formats are understood:

* newline-delimited JSON using Coinbase websocket field names;
* a normalized CSV interchange format (integer ticks / lots / microseconds)::

    ts_micros,kind,side,price_ticks,size_units,order_id
    ts_micros,best_bid_ticks,best_ask_ticks,last_price_ticks,bid_size_units,ask_size_units

Tick and lot sizes come from a small JSON manifest
(``{"tick_size": "0.01", "lot_size": "0.00001", "pair": "BTC-USD"}``).
"""
from __future__ import annotations

import calendar
import io
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from functools import lru_cache
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union

from .errors import ClockSkew, ConfigError, MalformedRecord
from .lob_core import BUY, CANCEL, CHANGE, MATCH, OPEN, SELL, OrderEvent

logger = logging.getLogger(__name__)

FULL_HEADER = "ts_micros,kind,side,price_ticks,size_units,order_id"
TICKER_HEADER = "ts_micros,best_bid_ticks,best_ask_ticks,last_price_ticks,bid_size_units,ask_size_units"

_SIDES = {"buy": BUY, "sell": SELL}
_KINDS = {"open": OPEN, "match": MATCH, "cancel": CANCEL, "change": CHANGE}

Source = Union[str, os.PathLike, IO, Iterable]


@dataclass(frozen=True)
class Instrument:
    """Dataset manifest: price and size increments."""

    tick_size: Decimal = Decimal("0.01")
    lot_size: Decimal = Decimal("0.00001")
    pair: str = "BTC-USD"

    def to_ticks(self, price: str) -> int:
        return _to_units(price, self.tick_size, "price")

    def to_lots(self, size: str) -> int:
        return _to_units(size, self.lot_size, "size")

    def to_dict(self) -> dict:
        return {"tick_size": str(self.tick_size), "lot_size": str(self.lot_size), "pair": self.pair}


def load_manifest(path) -> Instrument:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return Instrument(Decimal(str(raw["tick_size"])), Decimal(str(raw["lot_size"])),
                          str(raw.get("pair", "")))
    except (OSError, KeyError, ValueError, InvalidOperation) as exc:
        raise ConfigError(f"bad manifest {path}: {exc}") from exc


def _to_units(text, unit: Decimal, what: str) -> int:
    try:
        q = Decimal(text) / unit
    except (InvalidOperation, TypeError):
        raise ValueError(f"unparseable {what} {text!r}")
    i = int(q)
    if i != q:
        raise ValueError(f"{what} {text} is not a multiple of {unit}")
    if i < 0:
        raise ValueError(f"negative {what} {text}")
    return i


@dataclass(slots=True)
class TickerRecord:
    ts: int
    best_bid: int
    best_ask: int
    last_price: int
    best_bid_size: Optional[int] = None
    best_ask_size: Optional[int] = None

    @property
    def has_sizes(self) -> bool:
        return self.best_bid_size is not None and self.best_ask_size is not None


@dataclass
class ParseReport:
    """Counts and line-numbered problems collected while parsing or merging."""

    lines: int = 0
    records: int = 0
    malformed: list = field(default_factory=list)  # (line_no, reason)
    unsupported: Counter = field(default_factory=Counter)
    ignored: Counter = field(default_factory=Counter)
    no_reference: int = 0
    clock_skew: int = 0

    def to_dict(self) -> dict:
        return {
            "lines": self.lines,
            "records": self.records,
            "malformed": len(self.malformed),
            "malformed_first": [f"line {n}: {r}" for n, r in self.malformed[:10]],
            "unsupported": dict(sorted(self.unsupported.items())),
            "ignored": dict(sorted(self.ignored.items())),
            "no_reference": self.no_reference,
            "clock_skew": self.clock_skew,
        }


def _iter_lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8", newline="") as fh:
            for raw in fh:
                yield raw.rstrip("\r\n")
        return
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    for raw in source:
        if isinstance(raw, (bytes, bytearray)):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


def _csv_lines(source: Source, header: str, report: ParseReport) -> Iterator[tuple]:
    """Numbered data lines after ``header``; blank and ``#`` comment lines are skipped."""
    lines = enumerate(_iter_lines(source), 1)
    n = 0
    for n, line in lines:
        if line and not line.startswith("#"):
            if line != header:
                _fail(report, True, n, f"expected header {header!r}")
            break
    else:
        report.lines += n
        _fail(report, True, 1, f"expected header {header!r}")
    try:
        for n, line in lines:
            if line and line[0] != "#":
                yield n, line
    finally:
        report.lines += n


def _fail(report: ParseReport, strict: bool, line_no: int, reason: str) -> None:
    if strict:
        raise MalformedRecord(line_no, reason)
    report.malformed.append((line_no, reason))
    logger.debug("skipping line %d: %s", line_no, reason)


# -- timestamps ---------------------------------------------------------

@lru_cache(maxsize=4096)
def _epoch_seconds(prefix: str) -> int:
    # prefix is "YYYY-MM-DDTHH:MM:SS"
    y, mo, d = int(prefix[0:4]), int(prefix[5:7]), int(prefix[8:10])
    h, mi, s = int(prefix[11:13]), int(prefix[14:16]), int(prefix[17:19])
    if prefix[4] != "-" or prefix[7] != "-" or prefix[10] not in "T " or prefix[13] != ":":
        raise ValueError(f"bad timestamp {prefix!r}")
    return calendar.timegm((y, mo, d, h, mi, s, 0, 0, 0))


def parse_timestamp(text) -> int:
    """ISO-8601 UTC (``2022-11-28T14:00:00.123456Z``) or epoch seconds to micros."""
    if isinstance(text, (int, float)):
        return int(round(text * 1_000_000))
    if len(text) >= 19 and text[4:5] == "-":
        base = _epoch_seconds(text[:19])
        rest = text[19:]
        if rest.endswith("Z"):
            rest = rest[:-1]
        elif rest.endswith("+00:00"):
            rest = rest[:-6]
        frac = 0
        if rest:
            if rest[0] != "." or not rest[1:].isdigit():
                raise ValueError(f"bad timestamp {text!r}")
            digits = (rest[1:] + "000000")[:6]
            frac = int(digits)
        return base * 1_000_000 + frac
    q = Decimal(text) * 1_000_000
    return int(q.to_integral_value())


# -- full channel -------------------------------------------------------

def _full_from_json(msg: dict, inst: Instrument, report: ParseReport) -> Optional[OrderEvent]:
    typ = msg.get("type")
    if typ is None:
        raise ValueError("missing 'type'")
    if typ == "received":
        report.ignored["received"] += 1
        return None
    if typ not in ("open", "done", "match", "change"):
        report.unsupported[str(typ)] += 1
        return None
    ts = parse_timestamp(msg["time"])
    side = _SIDES.get(msg.get("side"))
    if side is None:
        raise ValueError(f"bad side {msg.get('side')!r}")
    if typ == "open":
        return OrderEvent(ts, OPEN, side, inst.to_ticks(msg["price"]),
                          inst.to_lots(msg["remaining_size"]), str(msg["order_id"]))
    if typ == "done":
        reason = msg.get("reason")
        if reason == "filled":
            # maker fills are already accounted for by their match records
            report.ignored["done_filled"] += 1
            return None
        if reason != "canceled":
            raise ValueError(f"unknown done reason {reason!r}")
        if msg.get("price") is None:
            report.ignored["done_no_price"] += 1
            return None
        remaining = msg.get("remaining_size", "0")
        return OrderEvent(ts, CANCEL, side, inst.to_ticks(msg["price"]),
                          inst.to_lots(remaining), str(msg["order_id"]))
    if typ == "match":
        # exchange 'side' is the maker side; OrderEvent carries the taker side
        return OrderEvent(ts, MATCH, side.opposite, inst.to_ticks(msg["price"]),
                          inst.to_lots(msg["size"]), str(msg["maker_order_id"]))
    # change
    if msg.get("new_size") is None:
        report.ignored["change_funds"] += 1
        return None
    price = msg.get("price")
    return OrderEvent(ts, CHANGE, side, inst.to_ticks(price) if price is not None else 0,
                      inst.to_lots(msg["new_size"]), str(msg["order_id"]))


def _full_from_csv(fields: list) -> OrderEvent:
    if len(fields) != 6:
        raise ValueError(f"expected 6 fields, got {len(fields)}")
    kind = _KINDS.get(fields[1])
    side = _SIDES.get(fields[2])
    if kind is None:
        raise KeyError(fields[1])
    if side is None:
        raise ValueError(f"bad side {fields[2]!r}")
    price, size = int(fields[3]), int(fields[4])
    if price < 0 or size < 0:
        raise ValueError("negative price or size")
    if not fields[5]:
        raise ValueError("empty order_id")
    return OrderEvent(int(fields[0]), kind, side, price, size, fields[5])


def parse_full_channel(source: Source, fmt: str = "csv", *, instrument: Optional[Instrument] = None,
                       strict: bool = False, report: Optional[ParseReport] = None) -> Iterator[OrderEvent]:
    """Yield normalized :class:`OrderEvent` records in file order.

    ``received`` and ``done/filled`` messages carry no book change and are
    counted under ``report.ignored``; unknown message types under
    ``report.unsupported``. Malformed lines raise in strict mode and are
    recorded with their line number otherwise.
    """
    if report is None:
        report = ParseReport()
    if fmt == "jsonl":
        inst = instrument or Instrument()
        for n, line in enumerate(_iter_lines(source), 1):
            report.lines += 1
            if not line.strip():
                continue
            try:
                msg = json.loads(line)
                if not isinstance(msg, dict):
                    raise ValueError("not a JSON object")
                ev = _full_from_json(msg, inst, report)
            except (ValueError, KeyError, TypeError) as exc:
                _fail(report, strict, n, f"{type(exc).__name__}: {exc}")
                continue
            if ev is not None:
                report.records += 1
                yield ev
    elif fmt == "csv":
        kinds, sides = _KINDS, _SIDES
        records = 0
        for n, line in _csv_lines(source, FULL_HEADER, report):
            # fast path for well-formed rows; anything unusual goes through the checked parser
            f = line.split(",")
            try:
                ts, k, sd, px, sz, oid = f
                kind, side, price, size = kinds[k], sides[sd], int(px), int(sz)
                if price < 0 or size < 0 or not oid:
                    raise ValueError
                ev = OrderEvent(int(ts), kind, side, price, size, oid)
            except (KeyError, ValueError):
                try:
                    ev = _full_from_csv(f)
                except KeyError as exc:
                    report.unsupported[str(exc.args[0])] += 1
                    continue
                except ValueError as exc:
                    _fail(report, strict, n, str(exc))
                    continue
            records += 1
            yield ev
        report.records += records
    else:
        raise ConfigError(f"unknown format {fmt!r}")


def format_full_row(ev: OrderEvent) -> str:
    return f"{ev.ts},{ev.kind.value},{ev.side.value},{ev.price},{ev.size},{ev.order_id}"


def write_comments(fh: IO[str], comments: Iterable[str]) -> None:
    for c in comments:
        fh.write(f"# {c}\n")


def write_full_csv(events: Iterable[OrderEvent], fh: IO[str], comments: Iterable[str] = ()) -> int:
    write_comments(fh, comments)
    fh.write(FULL_HEADER + "\n")
    n = 0
    for ev in events:
        fh.write(format_full_row(ev) + "\n")
        n += 1
    return n


# -- ticker channel -----------------------------------------------------

def _opt_int(text: str) -> Optional[int]:
    return int(text) if text != "" else None


def _check_ticker(rec: TickerRecord) -> TickerRecord:
    if rec.best_bid >= rec.best_ask:
        raise ValueError(f"crossed quote bid {rec.best_bid} >= ask {rec.best_ask}")
    for v in (rec.best_bid_size, rec.best_ask_size):
        if v is not None and v < 0:
            raise ValueError("negative quote size")
    return rec


def _ticker_from_json(msg: dict, inst: Instrument) -> TickerRecord:
    bid_size = msg.get("best_bid_size")
    ask_size = msg.get("best_ask_size")
    return TickerRecord(
        parse_timestamp(msg["time"]),
        inst.to_ticks(msg["best_bid"]),
        inst.to_ticks(msg["best_ask"]),
        inst.to_ticks(msg["price"]),
        inst.to_lots(bid_size) if bid_size not in (None, "") else None,
        inst.to_lots(ask_size) if ask_size not in (None, "") else None,
    )


def parse_ticker_channel(source: Source, fmt: str = "csv", *, instrument: Optional[Instrument] = None,
                         strict: bool = False, report: Optional[ParseReport] = None) -> Iterator[TickerRecord]:
    """Yield :class:`TickerRecord` in file order; crossed quotes are malformed."""
    if report is None:
        report = ParseReport()
    if fmt == "jsonl":
        inst = instrument or Instrument()
        for n, line in enumerate(_iter_lines(source), 1):
            report.lines += 1
            if not line.strip():
                continue
            try:
                msg = json.loads(line)
                if not isinstance(msg, dict):
                    raise ValueError("not a JSON object")
                typ = msg.get("type", "ticker")
                if typ != "ticker":
                    report.unsupported[str(typ)] += 1
                    continue
                rec = _check_ticker(_ticker_from_json(msg, inst))
            except (ValueError, KeyError, TypeError) as exc:
                _fail(report, strict, n, f"{type(exc).__name__}: {exc}")
                continue
            report.records += 1
            yield rec
    elif fmt == "csv":
        for n, line in _csv_lines(source, TICKER_HEADER, report):
            f = line.split(",")
            try:
                if len(f) != 6:
                    raise ValueError(f"expected 6 fields, got {len(f)}")
                rec = _check_ticker(TickerRecord(int(f[0]), int(f[1]), int(f[2]), int(f[3]),
                                                 _opt_int(f[4]), _opt_int(f[5])))
            except ValueError as exc:
                _fail(report, strict, n, str(exc))
                continue
            report.records += 1
            yield rec
    else:
        raise ConfigError(f"unknown format {fmt!r}")


def format_ticker_row(rec: TickerRecord) -> str:
    bs = "" if rec.best_bid_size is None else str(rec.best_bid_size)
    as_ = "" if rec.best_ask_size is None else str(rec.best_ask_size)
    return f"{rec.ts},{rec.best_bid},{rec.best_ask},{rec.last_price},{bs},{as_}"


def write_ticker_csv(records: Iterable[TickerRecord], fh: IO[str], comments: Iterable[str] = ()) -> int:
    write_comments(fh, comments)
    fh.write(TICKER_HEADER + "\n")
    n = 0
    for rec in records:
        fh.write(format_ticker_row(rec) + "\n")
        n += 1
    return n


# -- merge --------------------------------------------------------------

def merge_channels(events: Iterable[OrderEvent], tickers: Iterable[TickerRecord], *,
                   strict: bool = False, report: Optional[ParseReport] = None) -> Iterator[OrderEvent]:
    """Attach to every event the latest ticker record at or before its timestamp.

    A sequential two-pointer pass; events keep their input order. Events that
    precede the first ticker keep ``ticker = None`` and are counted in
    ``report.no_reference``. A regressing ticker timestamp raises
    :class:`ClockSkew` in strict mode and is dropped with a warning otherwise.
    """
    if report is None:
        report = ParseReport()
    tick_it = iter(tickers)
    current = None
    pending = next(tick_it, None)
    last_tick_ts = None
    for ev in events:
        while pending is not None and pending.ts <= ev.ts:
            if last_tick_ts is not None and pending.ts < last_tick_ts:
                if strict:
                    raise ClockSkew(f"ticker ts {pending.ts} < previous {last_tick_ts}")
                logger.warning("dropping ticker at %d: regresses from %d", pending.ts, last_tick_ts)
                report.clock_skew += 1
            else:
                current = pending
                last_tick_ts = pending.ts
            pending = next(tick_it, None)
        ev.ticker = current
        if current is None:
            report.no_reference += 1
        yield ev


def load_dataset(full_path, ticker_path=None, *, fmt: str = "csv", instrument: Optional[Instrument] = None,
                 strict: bool = False, report: Optional[ParseReport] = None,
                 ticker_report: Optional[ParseReport] = None) -> Iterator[OrderEvent]:
    """Parse (and, when a ticker file is given, merge) a capture lazily."""
    events = parse_full_channel(full_path, fmt, instrument=instrument, strict=strict, report=report)
    if ticker_path is None:
        return events
    tickers = parse_ticker_channel(ticker_path, fmt, instrument=instrument, strict=strict,
                                   report=ticker_report)
    return merge_channels(events, tickers, strict=strict, report=report)


def sniff_format(path) -> str:
    p = Path(path)
    if p.suffix in (".jsonl", ".json", ".ndjson"):
        return "jsonl"
    return "csv"
