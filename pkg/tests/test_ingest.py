import io
import json
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from lobphys.errors import ClockSkew, MalformedRecord
from lobphys.ingest import (FULL_HEADER, TICKER_HEADER, Instrument, ParseReport, TickerRecord,
                            load_manifest, merge_channels, parse_full_channel, parse_ticker_channel,
                            parse_timestamp, write_full_csv, write_ticker_csv)
from lobphys.lob_core import BUY, CANCEL, CHANGE, MATCH, OPEN, SELL, OrderEvent

INST = Instrument(Decimal("0.01"), Decimal("1"), "TEST")
T0 = "2022-11-28T14:00:00.000001Z"


def jl(*msgs):
    return io.StringIO("\n".join(m if isinstance(m, str) else json.dumps(m) for m in msgs) + "\n")


def test_open_maps_fields():
    src = jl({"type": "open", "side": "buy", "price": "100.00", "remaining_size": "5",
              "time": T0, "order_id": "o1"})
    (ev,) = parse_full_channel(src, "jsonl", instrument=INST)
    assert (ev.kind, ev.side, ev.price, ev.size, ev.order_id) == (OPEN, BUY, 10000, 5, "o1")
    assert ev.ts == parse_timestamp(T0)


def test_done_canceled_maps_to_cancel_and_filled_is_ignored():
    report = ParseReport()
    src = jl({"type": "done", "reason": "canceled", "side": "sell", "price": "100.02",
              "remaining_size": "2", "time": T0, "order_id": "o2"},
             {"type": "done", "reason": "filled", "side": "sell", "price": "100.02",
              "remaining_size": "0", "time": T0, "order_id": "o3"},
             {"type": "received", "time": T0})
    evs = list(parse_full_channel(src, "jsonl", instrument=INST, report=report))
    assert [(e.kind, e.side, e.price) for e in evs] == [(CANCEL, SELL, 10002)]
    assert report.ignored == {"done_filled": 1, "received": 1}


def test_match_carries_taker_side_and_maker_id():
    src = jl({"type": "match", "side": "sell", "price": "100.02", "size": "3", "time": T0,
              "maker_order_id": "m", "taker_order_id": "t"})
    (ev,) = parse_full_channel(src, "jsonl", instrument=INST)
    assert (ev.kind, ev.side, ev.order_id, ev.size) == (MATCH, BUY, "m", 3)


def test_change_maps_new_size():
    src = jl({"type": "change", "side": "buy", "price": "99.00", "new_size": "4", "old_size": "6",
              "time": T0, "order_id": "o"})
    (ev,) = parse_full_channel(src, "jsonl", instrument=INST)
    assert (ev.kind, ev.size, ev.price) == (CHANGE, 4, 9900)


def test_truncated_line_reported_and_stream_continues():
    report = ParseReport()
    good = {"type": "open", "side": "buy", "price": "1.00", "remaining_size": "1", "time": T0,
            "order_id": "a"}
    src = jl(good, '{"type": "open", "side": "bu', dict(good, order_id="b"))
    evs = list(parse_full_channel(src, "jsonl", instrument=INST, report=report))
    assert [e.order_id for e in evs] == ["a", "b"]
    assert [n for n, _ in report.malformed] == [2]
    with pytest.raises(MalformedRecord, match="line 2"):
        list(parse_full_channel(jl(good, '{"type"', good), "jsonl", instrument=INST, strict=True))


def test_unknown_type_is_counted():
    report = ParseReport()
    src = jl({"type": "heartbeat", "time": T0})
    assert list(parse_full_channel(src, "jsonl", report=report)) == []
    assert report.unsupported == {"heartbeat": 1}


def test_ticker_json_with_and_without_sizes():
    src = jl({"type": "ticker", "time": T0, "best_bid": "100.00", "best_ask": "100.02", "price": "100.01",
              "best_bid_size": "5", "best_ask_size": "7"},
             {"type": "ticker", "time": T0, "best_bid": "100.00", "best_ask": "100.02", "price": "100.01"})
    a, b = parse_ticker_channel(src, "jsonl", instrument=INST)
    assert (a.best_bid, a.best_ask, a.last_price, a.best_bid_size, a.best_ask_size) == (10000, 10002, 10001, 5, 7)
    assert a.has_sizes and not b.has_sizes
    assert b.best_bid_size is None and b.best_ask_size is None


def test_crossed_ticker_is_malformed():
    report = ParseReport()
    src = io.StringIO(TICKER_HEADER + "\n1,100,100,100,1,1\n2,99,100,100,1,1\n")
    recs = list(parse_ticker_channel(src, report=report))
    assert [r.ts for r in recs] == [2]
    assert len(report.malformed) == 1 and report.malformed[0][0] == 2


def test_merge_two_pointer():
    events = [OrderEvent(t, OPEN, BUY, 100 - t, 1, f"o{t}") for t in (1, 3, 5)]
    tickers = [TickerRecord(2, 90, 110, 100), TickerRecord(4, 91, 110, 100)]
    report = ParseReport()
    merged = list(merge_channels(events, tickers, report=report))
    assert [e.ticker.ts if e.ticker else None for e in merged] == [None, 2, 4]
    assert report.no_reference == 1


def test_merge_clock_skew():
    events = [OrderEvent(10, OPEN, BUY, 1, 1, "a")]
    tickers = [TickerRecord(5, 1, 2, 1), TickerRecord(3, 1, 2, 1)]
    with pytest.raises(ClockSkew):
        list(merge_channels(events, tickers, strict=True))
    report = ParseReport()
    (ev,) = merge_channels([e.copy() for e in events], tickers, report=report)
    assert ev.ticker.ts == 5 and report.clock_skew == 1


def test_csv_header_and_comment_lines():
    text = "# a comment\n" + FULL_HEADER + "\n# another\n10,open,buy,100,5,x\n\n"
    (ev,) = parse_full_channel(io.StringIO(text))
    assert (ev.ts, ev.price, ev.size) == (10, 100, 5)
    with pytest.raises(MalformedRecord):
        list(parse_full_channel(io.StringIO("bogus,header\n1,open,buy,1,1,x\n")))


def test_csv_bad_rows():
    report = ParseReport()
    text = FULL_HEADER + "\n1,open,buy,100,5\n2,open,up,100,5,x\n3,wobble,buy,1,1,y\n4,open,sell,101,1,z\n"
    evs = list(parse_full_channel(io.StringIO(text), report=report))
    assert [e.order_id for e in evs] == ["z"]
    assert [n for n, _ in report.malformed] == [2, 3]
    assert report.unsupported == {"wobble": 1}


def test_manifest(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"tick_size":"0.01","lot_size":"0.00001","pair":"BTC-USD"}')
    inst = load_manifest(p)
    assert inst.to_ticks("16500.37") == 1650037
    assert inst.to_lots("0.12345") == 12345
    with pytest.raises(ValueError):
        inst.to_ticks("1.001")


def test_timestamps():
    assert parse_timestamp("1970-01-01T00:00:01.5Z") == 1_500_000
    assert parse_timestamp("1970-01-01T00:00:02Z") == 2_000_000
    assert parse_timestamp("3.25") == 3_250_000


events_st = st.lists(
    st.tuples(st.integers(0, 10**15), st.sampled_from([OPEN, CANCEL, MATCH, CHANGE]),
              st.sampled_from([BUY, SELL]), st.integers(0, 10**9), st.integers(0, 10**9),
              st.text("abcdef0123456789-", min_size=1, max_size=36)),
    max_size=40)


@given(events_st)
@settings(max_examples=200)
def test_full_csv_round_trip_is_byte_identical(rows):
    events = [OrderEvent(*r) for r in sorted(rows, key=lambda r: r[0])]
    first = io.StringIO()
    write_full_csv(events, first)
    again = io.StringIO()
    write_full_csv(parse_full_channel(io.StringIO(first.getvalue()), strict=True), again)
    assert again.getvalue() == first.getvalue()


@given(st.lists(st.tuples(st.integers(0, 10**12), st.integers(0, 10**6), st.integers(1, 10**6),
                          st.integers(0, 10**6), st.one_of(st.none(), st.integers(0, 10**6)),
                          st.one_of(st.none(), st.integers(0, 10**6))), max_size=30))
@settings(max_examples=200)
def test_ticker_csv_round_trip(rows):
    recs = [TickerRecord(t, b, b + gap, last, qb, qa) for t, b, gap, last, qb, qa in rows]
    first = io.StringIO()
    write_ticker_csv(recs, first, comments=["note"])
    again = io.StringIO()
    write_ticker_csv(parse_ticker_channel(io.StringIO(first.getvalue()), strict=True), again, comments=["note"])
    assert again.getvalue() == first.getvalue()


@given(st.lists(st.integers(0, 100), min_size=1, max_size=40), st.lists(st.integers(0, 100), max_size=40))
@settings(max_examples=300)
def test_merge_attaches_latest_ticker(event_ts, ticker_ts):
    event_ts, ticker_ts = sorted(event_ts), sorted(ticker_ts)
    events = [OrderEvent(t, OPEN, BUY, 1, 1, str(i)) for i, t in enumerate(event_ts)]
    tickers = [TickerRecord(t, 1, 2, 1) for t in ticker_ts]
    merged = list(merge_channels(events, tickers))
    assert [e.order_id for e in merged] == [str(i) for i in range(len(events))]
    for e in merged:
        before = [t for t in ticker_ts if t <= e.ts]
        if not before:
            assert e.ticker is None
        else:
            assert e.ticker.ts == max(before)
