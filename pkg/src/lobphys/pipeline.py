"""Batch commands: ingest check, active depth, measures, evaluation, synth.

Each ``cmd_*`` function takes a validated :class:`RunConfig`, writes its
files under ``cfg.out`` (when set) and returns a JSON-ready summary.
"""
from __future__ import annotations

import json
import logging
import math
import os
from array import array
from dataclasses import asdict, dataclass, field, fields
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .baselines import (STANDARD, amihud, default_bucket_size, historical_volatility_series,
                        kyle_lambda, local_volatility_series, ofi, roll_measure,
                        vpin)
from .errors import (ConfigError, DataError, DegenerateRegressor, EmptyStream, InsufficientData,
                     MalformedRecord, SeriesTooShort, SizesUnavailable)
from .ingest import (Instrument, ParseReport, load_dataset, load_manifest, parse_ticker_channel,
                     sniff_format, write_comments)
from .lob_core import BUY, MATCH, Book, sample_frames
from .physics import MICROS, active_depth, parse_depth_grid, physics_series
from .provenance import config_hash, header_lines
from .series import MeasureSeries, last_at_or_before, regular_grid
from .stats import (directional_accuracy,
                    event_directional_accuracy, fitted_model_table, format_table, granger,
                    horizon_price_changes, ols, regression_table)

logger = logging.getLogger("lobphys")


@dataclass
class RunConfig:
    full: Optional[str] = None
    ticker: Optional[str] = None
    manifest: Optional[str] = None
    fmt: str = "auto"
    dt: float = 0.1  # seconds
    window: float = 1.0  # seconds, active-depth and regression grid
    depth_grid: Optional[str] = None
    alpha: Optional[int] = None  # ticks; estimated when absent
    signed_correlation: bool = False
    quotes: str = "book"
    horizons: list = field(default_factory=lambda: [1, 10])
    vpin_bucket: Optional[int] = None
    vpin_rolling: int = 10
    granger_lags: str = "1:300"
    n_ar_lags: int = 5
    lv_points: int = 30
    hv_points: int = 300
    bar_seconds: float = 60.0  # Roll / Kyle / Amihud estimation windows
    predictions: Optional[str] = None
    out: Optional[str] = None
    strict: bool = False
    seed: int = 0
    synth: dict = field(default_factory=dict)
    defaulted: list = field(default_factory=list)

    # -- construction --------------------------------------------------
    @classmethod
    def build(cls, file_cfg: Optional[dict] = None, flags: Optional[dict] = None) -> "RunConfig":
        """Merge a config-file dict and explicit flags (flags win), then validate."""
        names = {f.name for f in fields(cls)} - {"defaulted"}
        merged = {}
        for source in (file_cfg or {}, flags or {}):
            for k, v in source.items():
                k = k.replace("-", "_")
                if k not in names:
                    raise ConfigError(f"unknown setting {k!r}")
                if v is not None:
                    merged[k] = v
        cfg = cls(**merged)
        cfg.defaulted = sorted(names - set(merged) - {"synth", "out", "full", "ticker", "predictions"})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def bad(msg):
            raise ConfigError(msg)

        for name in ("dt", "window", "bar_seconds"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
                bad(f"{name} must be a positive number of seconds, got {v!r}")
            if round(v * MICROS) < 1:
                bad(f"{name} is below one microsecond")
        if isinstance(self.horizons, str):
            self.horizons = [s for s in self.horizons.split(",") if s]
        try:
            self.horizons = [int(h) if float(h) == int(float(h)) else float(h) for h in self.horizons]
        except (TypeError, ValueError):
            bad(f"horizons must be whole seconds, got {self.horizons!r}")
        if not self.horizons or any(not isinstance(h, int) or h < 1 for h in self.horizons):
            bad(f"horizons must be whole seconds >= 1, got {self.horizons!r}")
        if self.quotes not in ("book", "ticker"):
            bad("quotes must be 'book' or 'ticker'")
        if self.fmt not in ("auto", "csv", "jsonl"):
            bad("fmt must be auto, csv or jsonl")
        if self.depth_grid is not None:
            try:
                parse_depth_grid(self.depth_grid)
            except ValueError as exc:
                bad(str(exc))
        if self.alpha is not None and (not isinstance(self.alpha, int) or self.alpha < 0):
            bad("alpha must be a non-negative number of ticks")
        if self.vpin_bucket is not None and (not isinstance(self.vpin_bucket, int) or self.vpin_bucket < 1):
            bad("vpin_bucket must be a positive number of lots")
        for name in ("vpin_rolling", "n_ar_lags", "lv_points", "hv_points"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < (3 if name.endswith("points") else 1):
                bad(f"{name} out of range: {v!r}")
        self.lag_offsets()
        for name in ("full", "ticker", "manifest", "predictions"):
            p = getattr(self, name)
            if p is not None and not os.path.isfile(p):
                bad(f"{name} file not found: {p}")
        if self.quotes == "ticker" and self.ticker is None:
            bad("quotes='ticker' needs a ticker file")

    def lag_offsets(self) -> list:
        text = str(self.granger_lags)
        try:
            if ":" in text:
                parts = [int(p) for p in text.split(":")]
                lo, hi = parts[0], parts[1]
                step = parts[2] if len(parts) > 2 else 1
                if len(parts) > 3 or step < 1:
                    raise ValueError
                lags = list(range(lo, hi + 1, step))
            else:
                lags = [int(p) for p in text.split(",") if p]
        except ValueError:
            raise ConfigError(f"granger_lags must be lo:hi[:step] or a comma list, got {text!r}")
        if not lags or min(lags) < 0:
            raise ConfigError(f"granger_lags must be non-negative, got {text!r}")
        return lags

    def require_dataset(self) -> None:
        if self.full is None:
            raise ConfigError("a full-channel file is required")

    def public(self) -> dict:
        """Settings that determine outputs (paths reduced to file names)."""
        d = asdict(self)
        d.pop("defaulted")
        d.pop("out")
        for k in ("full", "ticker", "manifest", "predictions"):
            if d[k] is not None:
                d[k] = os.path.basename(d[k])
        return d

    @property
    def dt_micros(self) -> int:
        return int(round(self.dt * MICROS))

    @property
    def window_micros(self) -> int:
        return int(round(self.window * MICROS))


# -- output ---------------------------------------------------------------

class Outputs:
    """Writes files under ``out`` with the provenance header; no-op without ``out``."""

    def __init__(self, cfg: RunConfig, command: str):
        self.dir = Path(cfg.out) if cfg.out else None
        self.command = command
        self.config = cfg.public()
        self.defaulted = cfg.defaulted
        self.written: list = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def comments(self) -> list:
        return header_lines(self.command, self.config, self.defaulted)

    def provenance(self) -> dict:
        return {"tool_version": __version__, "command": self.command,
                "config_hash": config_hash(self.config), "config": self.config,
                "defaulted": list(self.defaulted)}

    def _open(self, name):
        self.written.append(name)
        return open(self.dir / name, "w", encoding="utf-8", newline="\n")

    def text(self, name: str, body: str) -> None:
        if self.dir is None:
            return
        with self._open(name) as fh:
            write_comments(fh, self.comments())
            fh.write(body)

    def csv(self, name: str, writer) -> None:
        if self.dir is None:
            return
        with self._open(name) as fh:
            write_comments(fh, self.comments())
            writer(fh)

    def json(self, name: str, payload: dict) -> None:
        if self.dir is None:
            return
        with self._open(name) as fh:
            json.dump(dict(payload, provenance=self.provenance()), fh, sort_keys=True, indent=2,
                      default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (Decimal, Fraction)):
        return str(o)
    raise TypeError(type(o).__name__)


def _finite(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


# -- dataset access -------------------------------------------------------

def instrument_for(cfg: RunConfig) -> Instrument:
    if cfg.manifest:
        return load_manifest(cfg.manifest)
    if cfg.full:
        side = Path(cfg.full).with_name("manifest.json")
        if side.is_file():
            return load_manifest(side)
    if "instrument" not in cfg.defaulted:
        cfg.defaulted = sorted(set(cfg.defaulted) | {"instrument"})
    return Instrument()


def _fmt(cfg: RunConfig, path) -> str:
    return sniff_format(path) if cfg.fmt == "auto" else cfg.fmt


def events_of(cfg: RunConfig, inst: Instrument, report: Optional[ParseReport] = None, merge: bool = None):
    """Fresh lazy event stream (re-reads the file on each call)."""
    cfg.require_dataset()
    if merge is None:
        merge = cfg.quotes == "ticker"
    ticker = cfg.ticker if merge else None
    return load_dataset(cfg.full, ticker, fmt=_fmt(cfg, cfg.full), instrument=inst, strict=cfg.strict,
                        report=report)


def tickers_of(cfg: RunConfig, inst: Instrument, report: Optional[ParseReport] = None) -> list:
    if cfg.ticker is None:
        return []
    return list(parse_ticker_channel(cfg.ticker, _fmt(cfg, cfg.ticker), instrument=inst,
                                     strict=cfg.strict, report=report))


def _depth_grid(cfg: RunConfig):
    return None if cfg.depth_grid is None else parse_depth_grid(cfg.depth_grid)


# -- ingest-check -----------------------------------------------------------

def cmd_ingest_check(cfg: RunConfig) -> dict:
    """Parse and replay a capture; report record counts and replay consistency.

    A ticker record describes the book right after the last match at or
    before its timestamp (or after all events, before the first match).
    """
    cfg.require_dataset()
    inst = instrument_for(cfg)
    out = Outputs(cfg, "ingest-check")
    report, treport = ParseReport(), ParseReport()
    tickers = tickers_of(cfg, inst, treport)
    # with several records per timestamp only the last one is checkable
    checkable = [a for a, b in zip(tickers, tickers[1:] + [None]) if b is None or b.ts != a.ts]
    book = Book(strict=cfg.strict)
    kinds = {"open": 0, "match": 0, "cancel": 0, "change": 0}
    first = last = None
    after_match = None
    checked = mismatched = 0
    ti = 0

    def check_until(ts):
        nonlocal ti, checked, mismatched
        while ti < len(checkable) and (ts is None or checkable[ti].ts < ts):
            t = checkable[ti]
            quotes = after_match if after_match is not None else (book.best_bid, book.best_ask)
            checked += 1
            mismatched += (t.best_bid, t.best_ask) != quotes
            ti += 1

    for ev in events_of(cfg, inst, report, merge=False):
        check_until(ev.ts)
        book.apply(ev)
        if ev.kind is MATCH:
            after_match = (book.best_bid, book.best_ask)
        kinds[ev.kind.value] += 1
        first = ev.ts if first is None else first
        last = ev.ts
    check_until(None)
    if first is None:
        raise EmptyStream("full channel has no events")
    summary = {
        "instrument": inst.to_dict(),
        "full": report.to_dict(),
        "ticker": treport.to_dict() if cfg.ticker else None,
        "events": kinds,
        "first_ts": first,
        "last_ts": last,
        "orphans": book.orphans,
        "resting_orders": len(book.orders),
        "final_best_bid": book.best_bid,
        "final_best_ask": book.best_ask,
        "ticker_checked": checked,
        "ticker_mismatched": mismatched,
        "ticker_sizes": bool(tickers) and all(t.has_sizes for t in tickers),
    }
    out.json("ingest_report.json", summary)
    return summary


# -- active depth -------------------------------------------------------------

def cmd_active_depth(cfg: RunConfig) -> dict:
    cfg.require_dataset()
    inst = instrument_for(cfg)
    out = Outputs(cfg, "active-depth")
    logger.info("active-depth: sweeping depths over %.3g s windows", cfg.window)
    ad = active_depth(events_of(cfg, inst), _depth_grid(cfg), cfg.window_micros,
                      signed=cfg.signed_correlation, tick_size=inst.tick_size, quotes=cfg.quotes,
                      strict=cfg.strict)
    out.json("active_depth.json", ad.to_dict())

    def curve(fh):
        fh.write("gamma_ticks,correlation\n")
        for g, c in ad.correlation_curve:
            fh.write(f"{g},{c!r}\n")

    out.csv("correlation_curve.csv", curve)
    summary = ad.to_dict()
    summary.pop("correlation_curve")
    return summary


# -- measures ---------------------------------------------------------------

@dataclass
class MeasureBundle:
    inst: Instrument
    alpha: int
    physics: object
    match_ts: np.ndarray
    match_px: np.ndarray  # ticks
    match_q: np.ndarray  # taker-signed lots
    tickers: list
    series: dict  # name -> MeasureSeries (or None when unavailable)
    scalars: dict
    unavailable: dict


def compute_measures(cfg: RunConfig) -> MeasureBundle:
    cfg.require_dataset()
    inst = instrument_for(cfg)
    tick = inst.tick_size
    alpha = cfg.alpha
    if alpha is None:
        logger.info("measures: estimating active depth")
        alpha = active_depth(events_of(cfg, inst), _depth_grid(cfg), cfg.window_micros,
                             signed=cfg.signed_correlation, tick_size=tick, quotes=cfg.quotes,
                             strict=cfg.strict).alpha
    logger.info("measures: energy and momentum with alpha = %d ticks, dt = %.3g s", alpha, cfg.dt)
    m_ts, m_px, m_q = array("q"), array("q"), array("q")

    def tap(frames):
        # keep three integers per trade rather than the events themselves
        for fr in frames:
            for ev in fr.events:
                if ev.kind is MATCH:
                    m_ts.append(ev.ts)
                    m_px.append(ev.price)
                    m_q.append(ev.size if ev.side is BUY else -ev.size)
            yield fr

    frames = tap(sample_frames(events_of(cfg, inst), cfg.dt_micros, quotes=cfg.quotes, strict=cfg.strict))
    phys = physics_series(None, alpha, cfg.dt_micros, tick_size=tick, frames=frames)
    ts, px, q = (np.frombuffer(a, dtype=np.int64).copy() for a in (m_ts, m_px, m_q))
    tickers = tickers_of(cfg, inst)
    series, scalars, unavailable = {}, {}, {}
    tick_f = float(tick)
    lot_f = float(inst.lot_size)
    w = cfg.window_micros

    if len(ts):
        bucket = cfg.vpin_bucket or default_bucket_size(int(np.abs(q).sum()), int(ts[-1] - ts[0]))
        scalars["vpin_bucket_lots"] = bucket
        try:
            series["vpin"] = vpin(zip(ts.tolist(), [_side(v) for v in q.tolist()], np.abs(q).tolist()),
                                  bucket, cfg.vpin_rolling)
        except DataError as exc:
            unavailable["vpin"] = str(exc)
        grid = regular_grid(ts[0], phys.t[-1] if len(phys.t) else ts[-1], w)
        price = last_at_or_before(ts, px * tick_f, grid)
        series["local_volatility"] = local_volatility_series(grid, price, cfg.lv_points)
        series["historical_volatility"] = historical_volatility_series(grid, price, cfg.hv_points)
        roll = roll_measure(px * tick_f) if len(px) >= 3 else None
        scalars["roll"] = None if roll is None else {
            "spread": roll.spread, "autocovariance": roll.autocovariance, "flagged": roll.flagged,
            "definition": STANDARD}
        try:
            kl = kyle_lambda(px * tick_f, q * lot_f)
            scalars["kyle_lambda"] = {"lambda": kl.lam, "stderr": kl.stderr, "n_obs": kl.n_obs,
                                      "definition": STANDARD}
        except DataError as exc:
            unavailable["kyle_lambda"] = str(exc)
        bar = int(round(cfg.bar_seconds * MICROS))
        scalars["amihud"] = _amihud_bars(ts, px * tick_f, np.abs(q) * lot_f, bar)
        series.update(_bar_series(ts, px * tick_f, q * lot_f, bar))
        for name in ("roll", "kyle_lambda", "amihud"):
            if not len(series[name]):
                unavailable[name] = f"no {cfg.bar_seconds:g} s window has enough trades"
                del series[name]
    else:
        for name in ("vpin", "local_volatility", "historical_volatility", "roll", "kyle_lambda", "amihud"):
            unavailable[name] = "no matches in the capture"
    for name, column in PHYSICS_MEASURES:
        series[name] = MeasureSeries(name, phys.t, np.cumsum(getattr(phys, column)),
                                     {"alpha_ticks": int(alpha), "dt_micros": int(phys.dt), "cumulative": True})
    if tickers:
        try:
            series["ofi"] = ofi(tickers, w)
        except SizesUnavailable as exc:
            unavailable["ofi"] = str(exc)
    else:
        unavailable["ofi"] = "no ticker channel"
    return MeasureBundle(inst, int(alpha), phys, ts, px, q, tickers, series, scalars, unavailable)


def _side(v):
    from .lob_core import BUY, SELL
    return BUY if v > 0 else SELL


PHYSICS_MEASURES = (("energy", "e_incr"), ("momentum", "p_incr"), ("energy_limit", "e_limit"),
                    ("momentum_limit", "p_limit"), ("energy_market", "e_market"),
                    ("momentum_market", "p_market"))


def _bars(ts, bar: int):
    """Index ranges of trades falling in each ``(k*bar, (k+1)*bar]`` window."""
    key = (ts - 1) // bar
    edges = np.flatnonzero(np.diff(key)) + 1
    starts = np.concatenate([[0], edges])
    ends = np.append(edges, len(ts))
    return key[starts], starts, ends


def _bar_series(ts, price, signed_volume, bar: int) -> dict:
    """Roll, Kyle and Amihud estimated on each window of ``bar`` micros."""
    keys, starts, ends = _bars(ts, bar)
    roll_t, roll_v, flagged = [], [], 0
    kyle_t, kyle_v = [], []
    ami_t, ami_v = [], []
    prev_close = None
    for k, a, b in zip(keys, starts, ends):
        t_end = int((k + 1) * bar)
        p = price[a:b]
        if b - a >= 3:
            est = roll_measure(p)
            flagged += est.flagged
            roll_t.append(t_end)
            roll_v.append(est.spread)
        if b - a >= 10:
            try:
                kyle_v.append(kyle_lambda(p, signed_volume[a:b]).lam)
                kyle_t.append(t_end)
            except DataError:
                pass
        dollar = float(np.sum(np.abs(signed_volume[a:b]) * p))
        if prev_close is not None and dollar > 0:
            ami_t.append(t_end)
            ami_v.append(amihud([p[-1] / prev_close - 1.0], [dollar]))
        prev_close = p[-1]
    meta = {"definition": STANDARD, "bar_micros": int(bar)}
    return {
        "roll": MeasureSeries("roll", np.asarray(roll_t, dtype=np.int64), np.asarray(roll_v),
                              dict(meta, flagged_windows=int(flagged))),
        "kyle_lambda": MeasureSeries("kyle_lambda", np.asarray(kyle_t, dtype=np.int64), np.asarray(kyle_v), meta),
        "amihud": MeasureSeries("amihud", np.asarray(ami_t, dtype=np.int64), np.asarray(ami_v), meta),
    }


def _amihud_bars(ts, price, volume, bar: int):
    _, starts, ends = _bars(ts, bar)
    close = price[ends - 1]
    vol = np.add.reduceat(volume * price, starts)
    if len(close) < 2:
        return None
    ret = close[1:] / close[:-1] - 1.0
    v = vol[1:]
    ok = v > 0
    if not ok.any():
        return None
    return {"value": amihud(ret[ok], v[ok]), "bars": int(ok.sum()), "bar_micros": int(bar),
            "definition": STANDARD}


def cmd_measures(cfg: RunConfig) -> dict:
    bundle = compute_measures(cfg)
    out = Outputs(cfg, "measures")
    out.csv("physics.csv", bundle.physics.write_csv)

    for name in sorted(bundle.series):
        out.csv(f"measure_{name}.csv", bundle.series[name].write_long_csv)
    phys = bundle.physics
    summary = {
        "alpha_ticks": bundle.alpha,
        "alpha_currency": str(bundle.alpha * bundle.inst.tick_size),
        "frames": len(phys),
        "dt_micros": phys.dt,
        "E_total": float(phys.E_cum[-1]) if len(phys) else 0.0,
        "P_total": float(phys.P_cum[-1]) if len(phys) else 0.0,
        "counts": phys.counts,
        "matches": int(len(bundle.match_ts)),
        "series": {k: {"points": len(v), "meta": v.meta} for k, v in sorted(bundle.series.items())},
        "scalars": bundle.scalars,
        "unavailable": bundle.unavailable,
    }
    out.json("measures_summary.json", summary)
    return summary


# -- evaluate ---------------------------------------------------------------

def _grid_series(bundle: MeasureBundle, step: int):
    """1 s grid from the first match to the last frame, with price, momentum, energy, OFI."""
    ts = bundle.match_ts
    if len(ts) == 0:
        raise InsufficientData("no matches: price series undefined")
    phys = bundle.physics
    end = int(phys.t[-1]) if len(phys) else int(ts[-1])
    grid = regular_grid(int(ts[0]), end, step)
    tick = float(bundle.inst.tick_size)
    price = last_at_or_before(ts, bundle.match_px * tick, grid)
    mom = phys.cumulative_at(grid, "p_incr")
    energy = phys.cumulative_at(grid, "e_incr")
    ofi = None
    if "ofi" in bundle.series:
        s = bundle.series["ofi"]
        cum = np.concatenate([[0.0], np.cumsum(s.values)])
        ofi = cum[np.searchsorted(s.t, grid, side="right")]
    return grid, price, mom, energy, ofi


def _fit(y, x):
    try:
        return ols(y, x), None
    except (DegenerateRegressor, SeriesTooShort) as exc:
        return None, str(exc)


def cmd_evaluate(cfg: RunConfig) -> dict:
    bundle = compute_measures(cfg)
    out = Outputs(cfg, "evaluate")
    step = cfg.window_micros
    grid, price, mom, energy, ofi = _grid_series(bundle, step)
    pair = bundle.inst.pair or "dataset"
    seconds = step / MICROS
    entries, fits = [], {}
    for name, cum in (("OFI", ofi), ("ΔM", mom)):
        for h in cfg.horizons:
            H = max(1, int(round(h / seconds)))
            label = f"{pair} {name} vs ΔP {h}s"
            if cum is None or len(price) <= H:
                reason = bundle.unavailable.get("ofi", "series too short") if cum is None else "series too short"
                entries.append((label, None))
                fits[label] = {"unavailable": reason}
                continue
            y = horizon_price_changes(price, H)
            x = horizon_price_changes(cum, H)
            fit, err = _fit(y, x)
            entries.append((label, fit))
            fits[label] = fit.to_dict() if fit else {"unavailable": err}
    reg = regression_table(entries)
    fitted = fitted_model_table(entries)
    out.text("regression_table.txt", reg)
    out.text("fitted_model_table.txt", fitted)
    out.json("fits.json", {"fits": fits, "alpha_ticks": bundle.alpha})

    granger_summary = _granger_sweeps(cfg, bundle, grid, energy, out)
    acc_header, acc_rows, acc = _accuracy(cfg, bundle, grid, price, mom, ofi, seconds, pair)
    acc_table = format_table(acc_header, acc_rows, "The comparison on prediction accuracy")
    out.text("accuracy_table.txt", acc_table)
    out.json("accuracy.json", {"accuracy": acc})
    return {"alpha_ticks": bundle.alpha, "regressions": {k: _brief(v) for k, v in fits.items()},
            "granger": granger_summary, "accuracy": acc, "unavailable": bundle.unavailable}


def _brief(fit: dict) -> dict:
    if "unavailable" in fit:
        return fit
    return {"r2": fit["r2"], "beta": fit["beta"]["value"], "n_obs": fit["n_obs"]}


def _granger_sweeps(cfg, bundle, grid, energy_cum, out) -> dict:
    lags = cfg.lag_offsets()
    e_incr = np.diff(energy_cum, prepend=energy_cum[0]) if len(energy_cum) else energy_cum
    xs = {"energy": e_incr}
    if "vpin" in bundle.series:
        xs["vpin"] = bundle.series["vpin"].at(grid)
    ys = {}
    for key, name in (("historical_volatility", "hv"), ("local_volatility", "lv")):
        if key in bundle.series:
            ys[name] = bundle.series[key].at(grid)
    summary = {}
    for yname, y in ys.items():
        for xname, x in xs.items():
            tag = f"granger_{yname}_vs_{xname}"
            ok = np.isfinite(y) & np.isfinite(x)
            if not ok.any():
                summary[tag] = {"unavailable": "no overlapping samples"}
                continue
            lo = np.argmax(ok)
            hi = len(ok) - np.argmax(ok[::-1])
            yy, xx = y[lo:hi], x[lo:hi]
            if not np.all(np.isfinite(yy) & np.isfinite(xx)):
                summary[tag] = {"unavailable": "gaps in the aligned series"}
                continue
            usable = [L for L in lags if L + cfg.n_ar_lags < len(yy) - 2 * cfg.n_ar_lags - 1]
            try:
                sweep = granger(yy, xx, usable, cfg.n_ar_lags, step_seconds=cfg.window)
            except (SeriesTooShort, ValueError) as exc:
                summary[tag] = {"unavailable": str(exc)}
                continue
            out.csv(tag + ".csv", sweep.write_csv)
            pv = np.asarray(sweep.p_values)
            summary[tag] = {"lags": len(sweep.lags), "min_p": _finite(pv.min()) if len(pv) else None,
                            "share_below_0.05": _finite((pv < 0.05).mean()) if len(pv) else None,
                            "collinear": len(sweep.collinear), "n_ar_lags": cfg.n_ar_lags}
    return summary


def _accuracy(cfg, bundle, grid, price, mom, ofi, seconds, pair):
    """Wide accuracy table (one row per predictor, one column per horizon) plus a JSON record."""
    header = ["Accuracy in %"] + [f"{h:g}-second price change" for h in cfg.horizons]
    rows, acc = [], {}
    for name, cum in (("momentum change", mom), ("OFI change", ofi)):
        row = [f"{name} on {pair}"]
        for h in cfg.horizons:
            H = max(1, int(round(h / seconds)))
            # non-overlapping windows: past change of the predictor vs the next change of the price
            idx = np.arange(H, len(grid) - H, H)
            realized = price[idx + H] - price[idx]
            key = f"{name} {h:g}s"
            if cum is None:
                row.append("unavailable")
                acc[key] = {"unavailable": bundle.unavailable.get("ofi", "")}
                continue
            try:
                a = directional_accuracy(cum[idx] - cum[idx - H], realized)
            except DataError as exc:
                row.append("unavailable")
                acc[key] = {"unavailable": str(exc)}
                continue
            row.append(f"{a:.2f}")
            acc[key] = {"accuracy_percent": a, "price_changes": int(np.count_nonzero(realized))}
        rows.append(row)
        rows.append(None)
    if cfg.predictions:
        pts, pv = _read_predictions(cfg.predictions)
        a, n = event_directional_accuracy(pts, pv, bundle.match_ts, bundle.match_px)
        header.append("event-driven price change")
        for row in rows:
            if row is not None:
                row.append("N/A")
        rows.append([f"external predictions on {pair}"] + ["N/A"] * len(cfg.horizons) + [f"{a:.2f}"])
        rows.append(None)
        acc["external"] = {"accuracy_percent": a, "price_changes": n}
    return header, rows, acc


def _read_predictions(path):
    ts, vals = [], []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("ts"):
                continue
            try:
                a, b = line.split(",")[:2]
                ts.append(int(a))
                vals.append(float(b))
            except ValueError:
                raise MalformedRecord(n, f"predictions: expected ts_micros,value in {path}")
    order = np.argsort(np.asarray(ts), kind="stable")
    return np.asarray(ts)[order], np.asarray(vals)[order]


# -- synth ---------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> dict:
    from .synth import SynthConfig, write_stream

    if cfg.out is None:
        raise ConfigError("synth needs --out")
    raw = dict(cfg.synth)
    raw.setdefault("seed", cfg.seed)
    if "seed" not in cfg.defaulted:
        raw["seed"] = cfg.seed
    try:
        scfg = SynthConfig.from_dict(raw)
        scfg.validate()
    except TypeError as exc:
        raise ConfigError(f"synth: {exc}") from exc
    logger.info("synth: seed %d, %.0f s", scfg.seed, scfg.duration)
    manifest = write_stream(scfg, cfg.out)
    return {"out": os.path.basename(os.path.normpath(cfg.out)), "seed": scfg.seed,
            "d_star_ticks": scfg.active_depth, "counts": manifest["counts"],
            "config_hash": manifest["config_hash"]}


COMMANDS = {
    "ingest-check": cmd_ingest_check,
    "active-depth": cmd_active_depth,
    "measures": cmd_measures,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def summary_json(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, default=_json_default, indent=2)
