"""Benchmark microstructure measures.

VPIN, order flow imbalance and Local Volatility follow their usual
constructions. Historical volatility, the Roll spread, Kyle's lambda and the
Amihud ratio use the standard literature formulas and are tagged
``definition: standard-literature`` in their metadata.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (DegenerateRegressor, InsufficientData, InsufficientVolume, SizesUnavailable,
                     TooFewPoints, ZeroVolume)
from .lob_core import BUY, MATCH, OrderEvent
from .series import MeasureSeries, regular_grid

STANDARD = "standard-literature"


# -- VPIN ---------------------------------------------------------------

@dataclass
class VolumeBucket:
    seq: int
    buy_volume: int
    sell_volume: int
    start_ts: int
    end_ts: int

    @property
    def total(self) -> int:
        return self.buy_volume + self.sell_volume

    @property
    def imbalance(self) -> Fraction:
        return Fraction(abs(self.buy_volume - self.sell_volume), self.total)


def _trades(matches) -> Iterable[tuple]:
    for m in matches:
        if isinstance(m, OrderEvent):
            if m.kind is MATCH:
                yield m.ts, m.side, m.size
        else:
            yield m


def volume_buckets(matches, bucket_size: int) -> list:
    """Split taker-classified trade volume into equal-volume buckets.

    A trade straddling a boundary is split across buckets. The trailing
    partial bucket is dropped.
    """
    if bucket_size <= 0:
        raise ValueError("bucket_size must be positive")
    out = []
    buy = sell = 0
    start = None
    for ts, side, size in _trades(matches):
        while size > 0:
            if start is None:
                start = ts
            take = min(size, bucket_size - buy - sell)
            if side is BUY:
                buy += take
            else:
                sell += take
            size -= take
            if buy + sell == bucket_size:
                out.append(VolumeBucket(len(out), buy, sell, start, ts))
                buy = sell = 0
                start = None
    return out


def vpin(matches, bucket_size: int, rolling_n: int = 50) -> MeasureSeries:
    """Rolling mean of bucket imbalances ``|buy - sell| / bucket_size``.

    Trade sides are the recorded taker sides. One value per complete bucket
    from the ``rolling_n``-th bucket on, stamped at the bucket's last trade.
    """
    if rolling_n < 1:
        raise ValueError("rolling_n must be >= 1")
    buckets = volume_buckets(matches, bucket_size)
    if len(buckets) < rolling_n:
        raise InsufficientVolume(f"{len(buckets)} complete buckets, need {rolling_n}")
    num = np.array([abs(b.buy_volume - b.sell_volume) for b in buckets], dtype=object)
    cum = np.concatenate([[0], np.cumsum(num)])
    exact = [Fraction(int(cum[k + 1] - cum[k + 1 - rolling_n]), rolling_n * bucket_size)
             for k in range(rolling_n - 1, len(buckets))]
    t = np.array([b.end_ts for b in buckets[rolling_n - 1:]], dtype=np.int64)
    return MeasureSeries("vpin", t, np.array([float(x) for x in exact]),
                         {"bucket_size": int(bucket_size), "rolling_n": int(rolling_n),
                          "classification": "taker side", "n_buckets": len(buckets)},
                         exact)


def default_bucket_size(total_volume: int, duration_micros: int, per_hour: int = 50) -> int:
    """``1/per_hour`` of the mean hourly traded volume (at least one lot)."""
    hours = max(duration_micros, 1) / 3_600_000_000
    return max(1, int(round(total_volume / hours / per_hour)))


# -- OFI ------------------------------------------------------------------

def ofi_updates(tickers) -> tuple[np.ndarray, np.ndarray]:
    """Per-quote-update order flow contributions ``e_n`` (integer lots).

    ``e_n = 1{b_n >= b_{n-1}} q^b_n - 1{b_n <= b_{n-1}} q^b_{n-1}
          - 1{a_n <= a_{n-1}} q^a_n + 1{a_n >= a_{n-1}} q^a_{n-1}``
    """
    ts, es = [], []
    prev = None
    for rec in tickers:
        if rec.best_bid_size is None or rec.best_ask_size is None:
            raise SizesUnavailable("best bid/ask sizes missing from the ticker channel; OFI unavailable")
        if prev is not None:
            b, qb, a, qa = rec.best_bid, rec.best_bid_size, rec.best_ask, rec.best_ask_size
            pb, pqb, pa, pqa = prev.best_bid, prev.best_bid_size, prev.best_ask, prev.best_ask_size
            e = 0
            if b >= pb:
                e += qb
            if b <= pb:
                e -= pqb
            if a <= pa:
                e -= qa
            if a >= pa:
                e += pqa
            ts.append(rec.ts)
            es.append(e)
        prev = rec
    return np.asarray(ts, dtype=np.int64), np.asarray(es, dtype=np.int64)


def ofi(tickers, window: int = 1_000_000, start: Optional[int] = None,
        end: Optional[int] = None) -> MeasureSeries:
    """Order flow imbalance summed over ``(T - window, T]`` on a regular grid."""
    tickers = list(tickers)
    ts, es = ofi_updates(tickers)
    if not tickers:
        raise SizesUnavailable("no ticker records")
    lo = tickers[0].ts if start is None else start
    hi = tickers[-1].ts if end is None else end
    grid = regular_grid(lo, hi, window)
    cum = np.concatenate([[0], np.cumsum(es)])
    vals = cum[np.searchsorted(ts, grid, side="right")] - cum[np.searchsorted(ts, grid - window, side="right")]
    return MeasureSeries("ofi", grid, vals.astype(np.float64),
                         {"window_micros": int(window), "units": "lots"})


# -- volatility -----------------------------------------------------------

def local_volatility(prices: Sequence) -> float:
    """Root mean square of consecutive price differences.

    Integer (tick) inputs are summed exactly before the final square root.
    """
    n = len(prices)
    if n < 2:
        raise TooFewPoints("local volatility needs at least two prices")
    if all(isinstance(p, (int, np.integer)) for p in prices):
        ss = 0
        prev = int(prices[0])
        for p in prices[1:]:
            d = int(p) - prev
            ss += d * d
            prev = int(p)
        return math.sqrt(Fraction(ss, n - 1))
    d = np.diff(np.asarray(prices, dtype=np.float64))
    return float(np.sqrt(np.mean(d * d)))


def historical_volatility(prices: Sequence) -> float:
    """Sample standard deviation (ddof=1) of simple returns."""
    p = np.asarray(prices, dtype=np.float64)
    if len(p) < 3:
        raise TooFewPoints("historical volatility needs at least two returns")
    r = p[1:] / p[:-1] - 1.0
    return float(np.std(r, ddof=1))


def rolling_apply(t: np.ndarray, values: np.ndarray, points: int, func, name: str, meta=None) -> MeasureSeries:
    """Apply ``func`` to each trailing block of ``points`` values."""
    values = np.asarray(values)
    out_t, out_v = [], []
    for i in range(points - 1, len(values)):
        block = values[i - points + 1:i + 1]
        if np.isnan(block).any():
            continue
        out_t.append(t[i])
        out_v.append(func(block))
    return MeasureSeries(name, np.asarray(out_t, dtype=np.int64), np.asarray(out_v, dtype=np.float64),
                         dict(meta or {}, points=int(points)))


def local_volatility_series(t: np.ndarray, prices: np.ndarray, points: int = 30) -> MeasureSeries:
    p = np.asarray(prices, dtype=np.float64)
    if len(p) >= points:
        # vectorized rolling RMS of differences over each block of `points` prices
        d2 = np.concatenate([[0.0], np.diff(p) ** 2])
        cum = np.concatenate([[0.0], np.cumsum(d2)])
        idx = np.arange(points - 1, len(p))
        ss = cum[idx + 1] - cum[idx - points + 2]
        vals = np.sqrt(ss / (points - 1))
        ok = ~np.isnan(vals)
        return MeasureSeries("local_volatility", np.asarray(t)[idx][ok], vals[ok], {"points": int(points)})
    return MeasureSeries("local_volatility", np.zeros(0, dtype=np.int64), np.zeros(0), {"points": int(points)})


def historical_volatility_series(t, prices, points: int = 300) -> MeasureSeries:
    return rolling_apply(np.asarray(t), np.asarray(prices, dtype=np.float64), points,
                         historical_volatility, "historical_volatility", {"definition": STANDARD})


# -- Roll / Kyle / Amihud ---------------------------------------------------

class RollEstimate(NamedTuple):
    spread: float
    autocovariance: float
    flagged: bool  # autocovariance >= 0, estimator undefined, spread reported as 0


def roll_measure(trade_prices: Sequence) -> RollEstimate:
    """``2 * sqrt(-cov(dp_t, dp_{t-1}))`` with population autocovariance."""
    p = np.asarray(trade_prices, dtype=np.float64)
    if len(p) < 3:
        raise TooFewPoints("Roll measure needs at least three trades")
    dp = np.diff(p)
    a, b = dp[1:], dp[:-1]
    cov = float(np.mean((a - a.mean()) * (b - b.mean())))
    if cov >= 0:
        return RollEstimate(0.0, cov, True)
    return RollEstimate(2.0 * math.sqrt(-cov), cov, False)


class KyleLambda(NamedTuple):
    lam: float
    stderr: float
    n_obs: int


def kyle_lambda(prices: Sequence, signed_volumes: Sequence) -> KyleLambda:
    """OLS slope of trade-to-trade price change on signed trade volume.

    ``signed_volumes[t]`` is the taker-signed size of trade ``t``; trade 0
    only anchors the first price change.
    """
    from .stats import ols

    p = np.asarray(prices, dtype=np.float64)
    q = np.asarray(signed_volumes, dtype=np.float64)
    if len(p) != len(q):
        raise ValueError("prices and volumes differ in length")
    if len(p) < 10:
        raise TooFewPoints("Kyle's lambda needs at least ten trades")
    x = q[1:]
    if np.ptp(x) == 0:
        raise DegenerateRegressor("signed volume has zero variance")
    fit = ols(np.diff(p), x)
    return KyleLambda(fit.beta.value, fit.beta.stderr, fit.n_obs)


def amihud(returns: Sequence, volumes: Sequence) -> float:
    """Mean of ``|return| / dollar volume``."""
    r = np.asarray(returns, dtype=np.float64)
    v = np.asarray(volumes, dtype=np.float64)
    if len(r) != len(v):
        raise ValueError("returns and volumes differ in length")
    if len(r) == 0:
        raise InsufficientData("empty window")
    if np.any(v <= 0):
        raise ZeroVolume("Amihud ratio needs strictly positive volume")
    return float(np.mean(np.abs(r) / v))


def signed_trades(matches) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(ts, price, taker-signed size)`` arrays from match events."""
    ts, px, q = [], [], []
    for m in matches:
        if m.kind is not MATCH:
            continue
        ts.append(m.ts)
        px.append(m.price)
        q.append(m.size if m.side is BUY else -m.size)
    return np.asarray(ts, dtype=np.int64), np.asarray(px, dtype=np.int64), np.asarray(q, dtype=np.int64)
