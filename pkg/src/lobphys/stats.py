"""Evaluation battery: simple OLS with residual diagnostics, Granger sweeps,
horizon price changes and directional accuracy."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

from .errors import (DegenerateRegressor, LengthMismatch, NoPriceChanges, SeriesTooShort)


@dataclass
class Coefficient:
    value: float
    stderr: float
    t: float
    p_value: float
    ci_low: float
    ci_high: float


@dataclass
class FitReport:
    alpha: Coefficient  # intercept
    beta: Coefficient  # slope
    r2: float
    f_stat: float
    f_pvalue: float
    durbin_watson: float
    jarque_bera: float
    jb_pvalue: float
    omnibus: float
    omnibus_pvalue: float
    skew: float
    kurtosis: float  # raw (normal = 3)
    n_obs: int
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def ols(y: Sequence, x: Sequence) -> FitReport:
    """Closed-form ``y = alpha + beta * x + e`` with the usual summary diagnostics.

    Skew and kurtosis are the biased sample moments of the residuals, with
    kurtosis reported raw. The omnibus statistic is D'Agostino's K^2 (needs
    at least 8 observations, NaN otherwise). An exact fit has no residual
    distribution: Durbin-Watson is reported as 2, the normality statistics as
    NaN, and the report is flagged ``zero_residuals``.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 1:
        raise LengthMismatch(f"y has shape {y.shape}, x has shape {x.shape}")
    n = len(y)
    if n < 3:
        raise SeriesTooShort("OLS needs at least 3 observations")
    xm, ym = x.mean(), y.mean()
    xc, yc = x - xm, y - ym
    sxx = float(np.dot(xc, xc))
    if sxx == 0 or np.ptp(x) == 0:
        raise DegenerateRegressor("regressor is constant")
    beta = float(np.dot(xc, yc)) / sxx
    alpha = ym - beta * xm
    resid = y - alpha - beta * x
    ssr = float(np.dot(resid, resid))
    tss = float(np.dot(yc, yc))
    dof = n - 2
    flags = []
    s2 = ssr / dof
    se_beta = math.sqrt(s2 / sxx)
    se_alpha = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    tcrit = float(sps.t.ppf(0.975, dof))

    def coef(val, se):
        if se > 0:
            t = val / se
            p = float(2 * sps.t.sf(abs(t), dof))
        else:
            t = math.copysign(math.inf, val) if val != 0 else math.nan
            p = 0.0 if val != 0 else math.nan
        return Coefficient(float(val), se, t, p, val - tcrit * se, val + tcrit * se)

    r2 = 1.0 - ssr / tss if tss > 0 else math.nan
    if ssr > 0:
        f = (tss - ssr) / s2
        f_p = float(sps.f.sf(f, 1, dof))
        dw = float(np.sum(np.diff(resid) ** 2) / ssr)
        with warnings.catch_warnings():
            # small-sample and near-constant residual warnings from scipy
            warnings.simplefilter("ignore", (UserWarning, RuntimeWarning))
            skew = float(sps.skew(resid))
            kurt = float(sps.kurtosis(resid, fisher=False))
            if n >= 8:
                omni, omni_p = (float(v) for v in sps.normaltest(resid))
            else:
                omni, omni_p = math.nan, math.nan
        jb = n / 6.0 * (skew ** 2 + (kurt - 3.0) ** 2 / 4.0)
        jb_p = float(sps.chi2.sf(jb, 2))
    else:
        flags.append("zero_residuals")
        f, f_p = math.inf, 0.0
        dw = 2.0
        skew = kurt = jb = jb_p = omni = omni_p = math.nan
    return FitReport(coef(alpha, se_alpha), coef(beta, se_beta), r2, f, f_p, dw, jb, jb_p,
                     omni, omni_p, skew, kurt, n, flags)


# -- tables -----------------------------------------------------------------

REGRESSION_COLUMNS = ("Dataset", "R^2", "F-statistic", "Prob(F-statistic)", "Omnibus", "Prob(Omnibus)",
                      "Skew", "Kurtosis", "Durbin-Watson", "Jarque-Bera (JB)", "Prob(JB)")
FITTED_COLUMNS = ("The fitted model", "Coefficient", "Standard error", "t", "P>=|t|", "[2.5%,", "97.5%]")


def _g(v, digits=4):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.{digits}g}"


def _p(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    if v == 0 or v < 1e-300:
        return "0.00"
    return f"{v:.3g}" if v < 1e-3 else f"{v:.3f}"


def _f3(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.3f}"


def regression_row(label: str, fit: Optional[FitReport]) -> list:
    if fit is None:
        return [label] + ["unavailable"] * (len(REGRESSION_COLUMNS) - 1)
    return [label, _f3(fit.r2), _g(fit.f_stat), _p(fit.f_pvalue), _f3(fit.omnibus), _p(fit.omnibus_pvalue),
            _f3(fit.skew), _f3(fit.kurtosis), _f3(fit.durbin_watson), _f3(fit.jarque_bera), _p(fit.jb_pvalue)]


def _coef_cell(v):
    a = abs(v)
    if a != 0 and (a < 1e-3 or a >= 1e5):
        return f"{v:.4g}"
    return f"{v:.4f}"


def _se_cell(v):
    a = abs(v)
    if a != 0 and (a < 1e-3 or a >= 1e5):
        return f"{v:.3g}"
    return f"{v:.3f}"


def fitted_rows(index: int, fit: Optional[FitReport]) -> list:
    if fit is None:
        return [[f"alpha_{index}"] + ["unavailable"] * 6, [f"beta_{index}"] + ["unavailable"] * 6]
    rows = []
    for name, c in ((f"alpha_{index}", fit.alpha), (f"beta_{index}", fit.beta)):
        rows.append([name, _coef_cell(c.value), _se_cell(c.stderr), _f3(c.t), _f3(c.p_value),
                     _se_cell(c.ci_low), _se_cell(c.ci_high)])
    return rows


def format_table(header: Sequence[str], rows: Sequence[Optional[Sequence[str]]], title: str = "") -> str:
    """Fixed-width text table; a ``None`` row draws a rule."""
    cols = list(zip(*([list(header)] + [list(r) for r in rows if r is not None])))
    widths = [max(len(str(c)) for c in col) for col in cols]
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))

    def line(cells):
        out = [str(cells[0]).ljust(widths[0])]
        out += [str(c).rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join(out).rstrip()

    parts = [title] if title else []
    parts += [rule, line(header), rule]
    parts += [rule if r is None else line(r) for r in rows]
    if not rows or rows[-1] is not None:
        parts.append(rule)
    return "\n".join(parts) + "\n"


def regression_table(entries: Sequence[tuple]) -> str:
    """Text table with one row per ``(label, FitReport or None)``."""
    return format_table(REGRESSION_COLUMNS, [regression_row(l, f) for l, f in entries],
                        "The regression analysis")


def fitted_model_table(entries: Sequence[tuple]) -> str:
    rows = []
    for i, (_, fit) in enumerate(entries, 1):
        rows.extend(fitted_rows(i, fit))
        rows.append(None)
    return format_table(FITTED_COLUMNS, rows, "The fitted model")


# -- horizons ---------------------------------------------------------------

def horizon_price_changes(prices: Sequence, horizon: int) -> np.ndarray:
    """``P[k + horizon] - P[k]`` on a regular grid; the last ``horizon`` points drop out."""
    p = np.asarray(prices)
    if horizon < 1:
        raise ValueError("horizon must be >= 1 grid step")
    if len(p) <= horizon:
        raise SeriesTooShort(f"{len(p)} points cannot span a horizon of {horizon}")
    return p[horizon:] - p[:-horizon]


# -- Granger ----------------------------------------------------------------

@dataclass
class GrangerSweep:
    lags: list  # offsets in seconds
    p_values: list
    config: dict
    collinear: list = field(default_factory=list)

    def write_csv(self, fh) -> None:
        fh.write("lag_seconds,p_value\n")
        for lag, p in zip(self.lags, self.p_values):
            fh.write(f"{lag!r},{float(p)!r}\n")


def _lagmat(v: np.ndarray, first: int, n_lags: int, rows: np.ndarray) -> np.ndarray:
    # columns v[t - first - j] for j = 0..n_lags-1
    return np.column_stack([v[rows - first - j] for j in range(n_lags)])


def _rss(design: np.ndarray, y: np.ndarray):
    # unit-norm columns so regressors on very different scales are not mistaken for rank loss
    norms = np.sqrt(np.einsum("ij,ij->j", design, design))
    norms[norms == 0] = 1.0
    scaled = design / norms
    coef, _, rank, _ = np.linalg.lstsq(scaled, y, rcond=None)
    r = y - scaled @ coef
    return float(np.dot(r, r)), int(rank)


def granger_pvalue(y: np.ndarray, x: np.ndarray, offset: int, n_ar_lags: int):
    """F-test p-value that ``x`` lagged by ``offset`` helps predict ``y``.

    Restricted model: constant and ``y[t-1..t-p]``. Unrestricted adds
    ``x[t-offset], ..., x[t-offset-p+1]``. Returns ``(p_value, collinear)``.
    """
    p = n_ar_lags
    start = max(p, offset + p - 1)
    rows = np.arange(start, len(y))
    n = len(rows)
    k_u = 1 + 2 * p
    if n - k_u < 1:
        raise SeriesTooShort("not enough rows for the unrestricted model")
    yy = y[rows]
    if np.ptp(yy) == 0:
        return 1.0, True
    const = np.ones((n, 1))
    ylags = _lagmat(y, 1, p, rows)
    xlags = _lagmat(x, offset, p, rows)
    restricted = np.hstack([const, ylags])
    full = np.hstack([restricted, xlags])
    rss_r, rank_r = _rss(restricted, yy)
    rss_u, rank_u = _rss(full, yy)
    scale = max(float(np.dot(yy - yy.mean(), yy - yy.mean())), 1e-300)
    # degrees of freedom from the effective ranks, so duplicated lags are not counted twice
    df_num, df_den = rank_u - rank_r, n - rank_u
    if df_num < 1 or df_den < 1:
        return 1.0, True
    if rss_u <= 1e-12 * scale:
        # x explains y exactly; only if the own lags do too is the test undefined
        return (1.0, True) if rss_r <= 1e-12 * scale else (0.0, False)
    f = ((rss_r - rss_u) / df_num) / (rss_u / df_den)
    return float(sps.f.sf(max(f, 0.0), df_num, df_den)), False


def granger(y: Sequence, x: Sequence, lag_offsets: Sequence[int], n_ar_lags: int = 5,
            step_seconds: float = 1.0) -> GrangerSweep:
    """Granger causality p-values of ``x`` on ``y`` for each lag offset.

    ``lag_offsets`` are in grid steps of ``step_seconds``. Collinear designs
    (e.g. constant ``y``) get p = 1 and are listed in ``collinear``.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape:
        raise LengthMismatch("y and x differ in length")
    if n_ar_lags < 1:
        raise ValueError("n_ar_lags must be >= 1")
    if len(y) < 10 * n_ar_lags:
        raise SeriesTooShort(f"series of {len(y)} points, need {10 * n_ar_lags}")
    lags, pvals, coll = [], [], []
    for off in lag_offsets:
        if off < 0:
            raise ValueError("lag offsets must be non-negative")
        pv, c = granger_pvalue(y, x, int(off), n_ar_lags)
        lags.append(off * step_seconds)
        pvals.append(pv)
        if c:
            coll.append(off * step_seconds)
    return GrangerSweep(lags, pvals, {"n_ar_lags": int(n_ar_lags), "step_seconds": step_seconds}, coll)


# -- directional accuracy ------------------------------------------------------

def directional_accuracy(predictions: Sequence, realized: Sequence) -> float:
    """Percent of nonzero realized changes whose sign the prediction matches.

    Zero predictions count as wrong; zero realized changes are not events.
    """
    pred = np.asarray(predictions, dtype=np.float64)
    real = np.asarray(realized, dtype=np.float64)
    if pred.shape != real.shape:
        raise LengthMismatch("predictions and realized changes differ in length")
    events = real != 0
    total = int(events.sum())
    if total == 0:
        raise NoPriceChanges("no price change to score")
    correct = int(np.sum(np.sign(pred[events]) == np.sign(real[events])))
    return 100.0 * correct / total


def event_directional_accuracy(pred_ts: Sequence, pred_values: Sequence,
                               price_ts: Sequence, prices: Sequence) -> tuple[float, int]:
    """Score a prediction stream against event-driven price changes.

    Every time the price differs from the previous observation is one event;
    the prediction used is the last one stamped at or before that event.
    Events with no prediction yet count as wrong. Returns
    ``(accuracy_percent, n_events)``.
    """
    price_ts = np.asarray(price_ts)
    p = np.asarray(prices, dtype=np.float64)
    change = np.diff(p)
    ev = np.flatnonzero(change != 0) + 1
    if len(ev) == 0:
        raise NoPriceChanges("no price change to score")
    pt = np.asarray(pred_ts)
    pv = np.asarray(pred_values, dtype=np.float64)
    idx = np.searchsorted(pt, price_ts[ev], side="right") - 1
    pred = np.where(idx >= 0, pv[np.clip(idx, 0, None)] if len(pv) else 0.0, 0.0)
    return directional_accuracy(pred, change[ev - 1]), len(ev)


def binomial_interval(n: int, p: float = 0.5, level: float = 0.99) -> tuple[float, float]:
    """Central interval (percent) of the binomial success fraction."""
    lo = sps.binom.ppf((1 - level) / 2, n, p)
    hi = sps.binom.ppf(1 - (1 - level) / 2, n, p)
    return 100.0 * lo / n, 100.0 * hi / n
