import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lobphys.baselines import (amihud, default_bucket_size, historical_volatility, kyle_lambda,
                               local_volatility, local_volatility_series, ofi, ofi_updates, roll_measure,
                               volume_buckets, vpin)
from lobphys.errors import (DegenerateRegressor, InsufficientVolume, SizesUnavailable, TooFewPoints,
                            ZeroVolume)
from lobphys.ingest import TickerRecord
from lobphys.lob_core import BUY, SELL


# -- VPIN ------------------------------------------------------------------

def _bucketed(splits, size=10):
    trades, t = [], 0
    for buy in splits:
        trades += [(t, BUY, buy), (t + 1, SELL, size - buy)]
        t += 2
    return trades


def test_vpin_hand_mean():
    series = vpin(_bucketed([6, 7, 8]), 10, rolling_n=3)
    assert series.exact == [Fraction(2, 5)]
    assert series.values[0] == 0.4


def test_vpin_balanced_and_one_sided():
    assert set(vpin(_bucketed([5] * 6), 10, 3).exact) == {0}
    one_sided = [(t, BUY, 7) for t in range(20)]
    assert set(vpin(one_sided, 10, 3).exact) == {1}


def test_vpin_splits_straddling_trades_and_drops_partial():
    buckets = volume_buckets([(0, BUY, 15), (1, SELL, 10)], 10)
    assert [(b.buy_volume, b.sell_volume) for b in buckets] == [(10, 0), (5, 5)]
    assert len(volume_buckets([(0, BUY, 9)], 10)) == 0


def test_vpin_insufficient_volume():
    with pytest.raises(InsufficientVolume):
        vpin(_bucketed([5, 5]), 10, rolling_n=3)


def test_default_bucket_size():
    assert default_bucket_size(50_000, 3_600_000_000) == 1000


@given(st.lists(st.tuples(st.sampled_from([BUY, SELL]), st.integers(1, 40)), min_size=1, max_size=200),
       st.integers(1, 30), st.integers(1, 5), st.randoms(use_true_random=False))
@settings(max_examples=300)
def test_vpin_bounded_and_volume_clocked(rows, bucket, n, rnd):
    trades = [(i, s, q) for i, (s, q) in enumerate(rows)]
    try:
        base = vpin(trades, bucket, n)
    except InsufficientVolume:
        return
    assert all(0 <= x <= 1 for x in base.exact)
    # relabel wall-clock time arbitrarily (monotone); the volume clock is unchanged
    stamps = sorted(rnd.randrange(10**9) for _ in trades)
    again = vpin([(t, s, q) for t, (_, s, q) in zip(stamps, trades)], bucket, n)
    assert again.exact == base.exact


# -- OFI -------------------------------------------------------------------

def test_ofi_hand_example():
    a = TickerRecord(0, 10000, 10002, 10001, 5, 7)
    b = TickerRecord(1, 10001, 10002, 10001, 3, 7)
    _, e = ofi_updates([a, b])
    assert list(e) == [3]


def test_ofi_unchanged_and_symmetric():
    a = TickerRecord(0, 100, 102, 101, 5, 7)
    _, e = ofi_updates([a, TickerRecord(1, 100, 102, 101, 5, 7)])
    assert list(e) == [0]
    _, e = ofi_updates([a, TickerRecord(1, 100, 102, 101, 9, 11)])
    assert list(e) == [0]


def test_ofi_unavailable_without_sizes():
    with pytest.raises(SizesUnavailable):
        ofi_updates([TickerRecord(0, 100, 102, 101), TickerRecord(1, 100, 102, 101)])


def test_ofi_windowed_sums():
    recs = [TickerRecord(0, 100, 102, 101, 5, 7), TickerRecord(500_000, 101, 102, 101, 3, 7),
            TickerRecord(1_500_000, 101, 102, 101, 3, 2)]
    series = ofi(recs, 1_000_000, start=1_000_000, end=2_000_000)
    assert list(series.values) == [3.0, 5.0]


quote = st.tuples(st.integers(100, 110), st.integers(1, 5), st.integers(0, 50), st.integers(0, 50))


@given(st.lists(quote, min_size=2, max_size=30))
@settings(max_examples=300)
def test_ofi_mirror_antisymmetry(rows):
    recs = [TickerRecord(i, b, b + g, b, qb, qa) for i, (b, g, qb, qa) in enumerate(rows)]
    mirrored = [TickerRecord(r.ts, 1000 - r.best_ask, 1000 - r.best_bid, 0, r.best_ask_size, r.best_bid_size)
                for r in recs]
    _, e = ofi_updates(recs)
    _, m = ofi_updates(mirrored)
    assert list(m) == [-x for x in e]


# -- volatility ---------------------------------------------------------------

def test_local_volatility_hand():
    assert local_volatility([100, 101, 99, 100]) == math.sqrt(2)
    assert local_volatility([5, 5, 5]) == 0
    with pytest.raises(TooFewPoints):
        local_volatility([1])


@pytest.mark.parametrize("c", [1, -3, 17])
def test_local_volatility_ramp_is_window_invariant(c):
    for n in range(10, 1001):
        assert local_volatility([1000 + c * t for t in range(n)]) == abs(c)


@given(st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=50), st.integers(-10**9, 10**9))
@settings(max_examples=300)
def test_local_volatility_translation_invariant(prices, shift):
    assert local_volatility(prices) == local_volatility([p + shift for p in prices])


def test_rolling_local_volatility_matches_direct():
    rng = np.random.default_rng(3)
    p = np.cumsum(rng.integers(-3, 4, 400)) + 10_000
    t = np.arange(len(p)) * 1_000_000
    s = local_volatility_series(t, p, points=30)
    direct = [local_volatility([int(x) for x in p[i - 29:i + 1]]) for i in range(29, len(p))]
    assert np.allclose(s.values, direct, rtol=1e-12, atol=0)


def test_historical_volatility():
    assert historical_volatility([10.0, 10.0, 10.0]) == 0
    r = 0.01
    p = [1.0]
    for k in range(3):
        p.append(p[-1] * (1 + (r if k % 2 == 0 else -r)))
    assert historical_volatility(p) == pytest.approx(2 * r / math.sqrt(3), rel=1e-9)
    with pytest.raises(TooFewPoints):
        historical_volatility([1.0, 1.01])


# -- Roll / Kyle / Amihud ----------------------------------------------------------

def test_roll_on_bounce_recovers_spread():
    debruijn = [-1, -1, -1, 1, -1, 1, 1, 1]
    s = 4
    q = debruijn * 50
    q = q + q[:2]
    prices = [10_000 + s / 2 * x for x in q]
    est = roll_measure(prices)
    assert not est.flagged
    assert est.autocovariance == -s * s / 4
    assert est.spread == s


def test_roll_ramp_is_flagged():
    est = roll_measure([100 + t * t for t in range(20)])
    assert est.flagged and est.spread == 0
    with pytest.raises(TooFewPoints):
        roll_measure([1, 2])


def test_roll_iid_price_changes_shrink_toward_zero():
    rng = np.random.default_rng(5)
    sizes = (200, 200_000)
    spreads = []
    for n in sizes:
        runs = [roll_measure(np.cumsum(rng.normal(0, 1, n))).spread for _ in range(20)]
        spreads.append(float(np.mean(runs)))
    # sampling noise in the autocovariance is O(n**-1/2), so the estimate decays as n**-1/4
    assert spreads[1] < spreads[0] / 3
    assert spreads[1] < 0.15


def test_kyle_exact_linear():
    rng = random.Random(1)
    q = [rng.choice([-1, 1]) * rng.randint(1, 50) for _ in range(40)]
    p = [100.0]
    for x in q[1:]:
        p.append(p[-1] + 0.001 * x)
    est = kyle_lambda(p, q)
    assert est.lam == pytest.approx(0.001, abs=1e-12)
    with pytest.raises(DegenerateRegressor):
        kyle_lambda(list(range(20)), [3] * 20)


def test_kyle_noisy_recovered_within_ci():
    rng = np.random.default_rng(8)
    q = rng.integers(-20, 21, 5000)
    p = np.concatenate([[0.0], np.cumsum(0.05 * q[1:] + rng.normal(0, 0.3, 4999))])
    est = kyle_lambda(p, q)
    assert abs(est.lam - 0.05) < 4 * est.stderr


def test_amihud():
    assert amihud([0.0, 0.0], [10, 20]) == 0
    assert amihud([0.01], [100]) == pytest.approx(1e-4, rel=1e-15)
    assert amihud([0.01, -0.03], [100, 300]) == pytest.approx((1e-4 + 1e-4) / 2)
    with pytest.raises(ZeroVolume):
        amihud([0.01], [0])
