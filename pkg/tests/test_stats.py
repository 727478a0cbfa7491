import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from lobphys.errors import DegenerateRegressor, LengthMismatch, NoPriceChanges, SeriesTooShort
from lobphys.stats import (binomial_interval, directional_accuracy, event_directional_accuracy,
                           fitted_model_table, granger, granger_pvalue, horizon_price_changes, ols,
                           regression_table)

sm = pytest.importorskip("statsmodels.api")
from statsmodels.stats.stattools import durbin_watson, jarque_bera, omni_normtest  # noqa: E402
from statsmodels.tsa.stattools import grangercausalitytests  # noqa: E402

# ten (x, y) pairs: heights / weights style textbook example
TEXTBOOK_X = np.array([63, 64, 66, 69, 69, 71, 71, 72, 73, 75], dtype=float)
TEXTBOOK_Y = np.array([127, 121, 142, 157, 162, 156, 169, 165, 181, 208], dtype=float)


def test_ols_matches_reference_implementation():
    fit = ols(TEXTBOOK_Y, TEXTBOOK_X)
    ref = sm.OLS(TEXTBOOK_Y, sm.add_constant(TEXTBOOK_X)).fit()
    close = dict(rel=1e-10, abs=1e-10)
    assert fit.alpha.value == pytest.approx(ref.params[0], **close)
    assert fit.beta.value == pytest.approx(ref.params[1], **close)
    assert fit.alpha.stderr == pytest.approx(ref.bse[0], **close)
    assert fit.beta.stderr == pytest.approx(ref.bse[1], **close)
    assert fit.beta.t == pytest.approx(ref.tvalues[1], **close)
    assert fit.beta.p_value == pytest.approx(ref.pvalues[1], **close)
    ci = ref.conf_int()
    assert (fit.beta.ci_low, fit.beta.ci_high) == pytest.approx(tuple(ci[1]), **close)
    assert fit.r2 == pytest.approx(ref.rsquared, **close)
    assert fit.f_stat == pytest.approx(ref.fvalue, **close)
    assert fit.f_pvalue == pytest.approx(ref.f_pvalue, **close)
    assert fit.durbin_watson == pytest.approx(durbin_watson(ref.resid), **close)
    jb, jb_p, skew, kurt = jarque_bera(ref.resid)
    assert (fit.jarque_bera, fit.jb_pvalue, fit.skew, fit.kurtosis) == pytest.approx((jb, jb_p, skew, kurt), **close)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # n = 10 is below the kurtosis test's comfort zone
        omni, omni_p = omni_normtest(ref.resid)
    assert (fit.omnibus, fit.omnibus_pvalue) == pytest.approx((omni, omni_p), **close)


def test_exact_fit_is_flagged():
    x = np.arange(10.0)
    fit = ols(2 * x + 1, x)
    assert fit.beta.value == pytest.approx(2, abs=1e-12)
    assert fit.alpha.value == pytest.approx(1, abs=1e-12)
    assert fit.r2 == 1.0
    assert fit.durbin_watson == 2.0
    assert "zero_residuals" in fit.flags
    assert fit.to_dict()["jarque_bera"] is None


def test_ols_errors():
    with pytest.raises(DegenerateRegressor):
        ols([1, 2, 3], [4, 4, 4])
    with pytest.raises(LengthMismatch):
        ols([1, 2, 3], [1, 2])
    with pytest.raises(SeriesTooShort):
        ols([1, 2], [1, 2])


def test_ols_on_independent_noise():
    rng = np.random.default_rng(0)
    pvals = []
    for _ in range(200):
        fit = ols(rng.normal(size=3600), rng.normal(size=3600))
        assert fit.r2 < 0.01
        pvals.append(fit.f_pvalue)
    # uniform p-values: each fifth of [0, 1] holds about 40 of 200
    counts, _ = np.histogram(pvals, bins=5, range=(0, 1))
    assert counts.min() >= 20


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=60),
       st.floats(0.01, 100), st.floats(-100, 100))
@settings(max_examples=300)
def test_r2_is_squared_correlation_and_affine_invariant(pairs, scale, shift):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    assume(np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3)
    fit = ols(y, x)
    r = np.corrcoef(x, y)[0, 1]
    assert fit.r2 == pytest.approx(r * r, abs=1e-12)
    moved = ols(y, scale * x + shift)
    assert moved.r2 == pytest.approx(fit.r2, abs=1e-9)
    assert moved.beta.value * scale == pytest.approx(fit.beta.value, rel=1e-7, abs=1e-9)
    if 0.01 < fit.f_pvalue < 0.99:
        assert moved.f_pvalue == pytest.approx(fit.f_pvalue, rel=1e-6)


def test_tables_render():
    fit = ols(TEXTBOOK_Y, TEXTBOOK_X)
    text = regression_table([("X heights", fit), ("missing", None)])
    assert text.startswith("The regression analysis")
    assert "Durbin-Watson" in text and "unavailable" in text
    fitted = fitted_model_table([("X heights", fit)])
    assert "Standard error" in fitted and "beta_1" in fitted


# -- horizons -----------------------------------------------------------------

def test_horizon_changes():
    assert list(horizon_price_changes([5] * 20, 10)) == [0] * 10
    ramp = [3 * t for t in range(40)]
    assert list(horizon_price_changes(ramp, 10)) == [30] * 30
    p = [1, 4, 2, 8, 5]
    assert list(horizon_price_changes(p, 2)) == [p[k + 2] - p[k] for k in range(3)]
    with pytest.raises(SeriesTooShort):
        horizon_price_changes([1, 2], 2)


# -- Granger -------------------------------------------------------------------

def test_granger_detects_one_step_lead():
    rng = np.random.default_rng(1)
    x = rng.normal(size=600)
    y = np.concatenate([[0.0], x[:-1]]) + 0.1 * rng.normal(size=600)
    sweep = granger(y, x, [0, 1, 5, 20], n_ar_lags=1)
    assert sweep.p_values[0] < 0.01 or sweep.p_values[1] < 0.01
    assert sweep.p_values[1] < 1e-10
    assert sweep.p_values[3] > sweep.p_values[1]


def test_granger_exact_lagged_copy():
    x = np.random.default_rng(7).normal(size=300)
    y = np.concatenate([[0.0], x[:-1]])
    sweep = granger(y, x, [1, 4], n_ar_lags=3)
    assert sweep.p_values[0] == 0.0 and sweep.collinear == []
    assert sweep.p_values[1] > 0.01


def test_granger_matches_reference_at_unit_offset():
    rng = np.random.default_rng(2)
    x = rng.normal(size=400)
    y = 0.3 * np.concatenate([[0.0], x[:-1]]) + rng.normal(size=400)
    for p in (1, 3, 5):
        ours, _ = granger_pvalue(y, x, 1, p)
        ref = grangercausalitytests(np.column_stack([y, x]), [p], verbose=False)[p][0]["ssr_ftest"][1]
        assert ours == pytest.approx(ref, rel=1e-8)


def test_granger_permutation_destroys_signal():
    rng = np.random.default_rng(3)
    x = rng.normal(size=500)
    y = np.concatenate([[0.0], x[:-1]]) + 0.5 * rng.normal(size=500)
    ps = [granger(y, rng.permutation(x), [1], n_ar_lags=2).p_values[0] for _ in range(50)]
    assert np.median(ps) >= 0.3


def test_granger_false_positive_rate():
    rng = np.random.default_rng(4)
    hits = sum(granger_pvalue(rng.normal(size=300), rng.normal(size=300), 1, 3)[0] < 0.05
               for _ in range(1000))
    lo, hi = binomial_interval(1000, 0.05, 0.999)
    assert lo <= hits / 10 <= hi


def test_granger_constant_y_is_collinear():
    sweep = granger(np.ones(100), np.random.default_rng(0).normal(size=100), [1, 2], n_ar_lags=2)
    assert sweep.p_values == [1.0, 1.0]
    assert sweep.collinear == [1.0, 2.0]
    buf = io.StringIO()
    sweep.write_csv(buf)
    assert buf.getvalue().splitlines()[0] == "lag_seconds,p_value"


def test_granger_too_short():
    with pytest.raises(SeriesTooShort):
        granger(np.zeros(20), np.zeros(20), [1], n_ar_lags=5)


@given(st.integers(0, 10_000), st.integers(0, 30), st.integers(1, 4))
@settings(max_examples=100, deadline=None)
def test_granger_pvalues_are_probabilities(seed, offset, lags):
    rng = np.random.default_rng(seed)
    sweep = granger(rng.normal(size=120), rng.normal(size=120), [offset], n_ar_lags=lags)
    assert all(0.0 <= p <= 1.0 for p in sweep.p_values)


# -- directional accuracy -----------------------------------------------------

def test_perfect_predictor():
    real = np.random.default_rng(0).normal(size=200)
    assert directional_accuracy(np.sign(real), real) == 100.0


def test_base_rate_predictor():
    real = [1.0] * 60 + [-1.0] * 40 + [0.0] * 30
    assert directional_accuracy([1.0] * 130, real) == 60.0


def test_zero_prediction_is_wrong():
    assert directional_accuracy([0.0, 1.0], [1.0, 1.0]) == 50.0
    with pytest.raises(NoPriceChanges):
        directional_accuracy([1.0], [0.0])


def test_random_predictor_on_random_walk():
    rng = np.random.default_rng(9)
    n = 20_000
    acc = directional_accuracy(rng.normal(size=n), rng.choice([-1.0, 1.0], n))
    lo, hi = binomial_interval(n, 0.5, 0.99)
    assert lo <= acc <= hi


@given(st.lists(st.tuples(st.floats(-10, 10).filter(lambda v: v == 0 or abs(v) > 1e-100),
                          st.sampled_from([-1.0, 1.0])), min_size=1, max_size=50),
       st.floats(1e-3, 1e3))
def test_accuracy_invariant_under_positive_rescaling(rows, k):
    pred = np.array([r[0] for r in rows])
    real = np.array([r[1] for r in rows])
    assert directional_accuracy(pred * k, real) == directional_accuracy(pred, real)


def test_event_driven_accuracy_uses_last_prediction():
    price_ts = [0, 10, 20, 30, 40]
    prices = [100, 101, 101, 100, 102]
    # events at 10 (+), 30 (-), 40 (+); predictions stamped at 5 (+) and 25 (-)
    acc, n = event_directional_accuracy([5, 25], [1.0, -1.0], price_ts, prices)
    assert n == 3
    assert acc == pytest.approx(200 / 3)


def test_binomial_interval_brackets_half():
    lo, hi = binomial_interval(1000)
    assert lo < 50 < hi
    assert math.isclose(50 - lo, hi - 50, abs_tol=0.2)


def test_granger_is_scale_free():
    rng = np.random.default_rng(6)
    x = rng.normal(size=400)
    y = 0.2 * np.concatenate([[0.0], x[:-1]]) + rng.normal(size=400)
    base = granger(y, x, [1, 3, 8], n_ar_lags=3)
    tiny_y = granger(y * 1e-7, x * 1e4, [1, 3, 8], n_ar_lags=3)
    assert tiny_y.collinear == []
    assert tiny_y.p_values == pytest.approx(base.p_values, rel=1e-6, abs=1e-12)
