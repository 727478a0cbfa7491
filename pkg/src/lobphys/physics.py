"""Active depth, order velocities, and the kinetic-energy / momentum series.

Each order carries a size and a displacement on the price axis. Over a sampling frame
``(T - dt, T]`` with reference quotes ``b = b_M(T - dt)`` and
``a = a_M(T - dt)`` and active depth ``alpha`` (all in ticks):

=============  =====================================  ==========================
role           velocity * dt (ticks)                   effective price
=============  =====================================  ==========================
submit buy     ``p_eff - (b - alpha)``                 ``min(p, a)``
cancel buy     ``(b - alpha) - p``                     ``p``
submit sell    ``p_eff - (a + alpha)``                 ``max(p, b)``
cancel sell    ``(a + alpha) - p``                     ``p``
=============  =====================================  ==========================

Only activity whose effective price lies in ``[b - alpha, a + alpha]`` is
counted. Each frame contributes ``sum(s * v**2) / 2`` to the energy and
``sum(s * v)`` to the momentum. Market orders enter as submissions through
their match records (taker side, matched size, capped price); matches add no
separate term.

Integer accumulators (``sum s*d`` and ``sum s*d**2`` with ``d`` the tick
displacement) are kept alongside the floats so identities can be checked
exactly.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateSeries, InsufficientData, NoMatches
from .lob_core import (BUY, CANCEL, CHANGE, MARKET, MATCH, OPEN, Frame, OrderEvent,
                       sample_frames)

logger = logging.getLogger(__name__)

MICROS = 1_000_000
DEFAULT_DT = 100_000
DEFAULT_WINDOW = 1_000_000
MIN_WINDOWS = 30


class Role(enum.Enum):
    SUBMIT_BUY = "submit_buy"
    CANCEL_BUY = "cancel_buy"
    SUBMIT_SELL = "submit_sell"
    CANCEL_SELL = "cancel_sell"


# -- match price velocity ------------------------------------------------

def _match_arrays(matches) -> tuple[np.ndarray, np.ndarray]:
    ts, px = [], []
    for m in matches:
        if isinstance(m, OrderEvent):
            if m.kind is not MATCH:
                continue
            ts.append(m.ts)
            px.append(m.price)
        else:
            ts.append(m[0])
            px.append(m[1])
    return np.asarray(ts, dtype=np.int64), np.asarray(px, dtype=np.int64)


def match_price_velocity(matches, window: int = DEFAULT_WINDOW, tick_size=1,
                         start: Optional[int] = None, end: Optional[int] = None):
    """Windowed match-price velocity ``(p*(T) - p*(T - W)) / W`` on a regular grid.

    ``matches`` holds match events or ``(ts, price_ticks)`` pairs. ``p*`` is
    carried forward between matches. Grid points are multiples of ``window``;
    only points whose window start already has a match price are returned.

    Returns ``(t_end, velocity)`` with velocity in ``tick_size`` units per
    second.
    """
    ts, px = _match_arrays(matches)
    if len(ts) == 0:
        raise NoMatches("no match price is ever defined")
    if np.any(np.diff(ts) < 0):
        raise ValueError("matches must be time-ordered")
    lo = -(-int(ts[0]) // window) * window if start is None else start
    hi = -(-int(ts[-1]) // window) * window if end is None else end
    grid = np.arange(lo, hi + 1, window, dtype=np.int64)
    idx_end = np.searchsorted(ts, grid, side="right") - 1
    idx_start = np.searchsorted(ts, grid - window, side="right") - 1
    ok = idx_start >= 0
    grid, idx_end, idx_start = grid[ok], idx_end[ok], idx_start[ok]
    dticks = px[idx_end] - px[idx_start]
    scale = float(Fraction(tick_size) * MICROS / window)
    return grid, dticks * scale


# -- reacted volume ------------------------------------------------------

def _reaction(ev: OrderEvent) -> int:
    """Size a limit-order submission or cancellation adds to reacted volume."""
    if ev.orphan:
        return 0
    kind = ev.kind
    if kind is OPEN or kind is CANCEL:
        return ev.size
    if kind is CHANGE and ev.prev_size is not None:
        return abs(ev.size - ev.prev_size)
    return 0


def _band_key(price: int, bid: int, ask: int) -> int:
    # smallest gamma with bid - gamma <= price <= ask + gamma
    k = bid - price
    if price - ask > k:
        k = price - ask
    return k if k > 0 else 0


def reacted_volume(events: Iterable[OrderEvent], ref_bid: int, ref_ask: int, gamma: int) -> int:
    """Total size submitted or cancelled with price in ``[ref_bid - gamma, ref_ask + gamma]``."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    total = 0
    for ev in events:
        s = _reaction(ev)
        if s and _band_key(ev.price, ref_bid, ref_ask) <= gamma:
            total += s
    return total


# -- active depth ----------------------------------------------------------

def default_depth_grid(midprice_ticks, n: int = 200, frac: float = 0.10) -> np.ndarray:
    """Log-spaced integer depths from one tick to ``frac`` of the midprice."""
    top = max(2.0, float(midprice_ticks) * frac)
    grid = np.unique(np.round(np.geomspace(1.0, top, n)).astype(np.int64))
    return grid[grid >= 1]


def parse_depth_grid(text: str) -> np.ndarray:
    """``"min:max:n"`` -> log-spaced integer tick grid."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise ValueError(f"depth grid must be min:max:n, got {text!r}") from exc
    if not (0 < lo <= hi) or n < 1:
        raise ValueError(f"invalid depth grid {text!r}")
    return np.unique(np.round(np.geomspace(lo, hi, n)).astype(np.int64))


@dataclass
class ActiveDepth:
    alpha: int  # ticks
    alpha_currency: Decimal
    correlation_curve: list  # [(gamma_ticks, correlation)]
    window: int  # micros
    n_windows: int = 0
    degenerate: list = field(default_factory=list)
    signed: bool = False

    def to_dict(self) -> dict:
        return {
            "alpha_ticks": int(self.alpha),
            "alpha_currency": str(self.alpha_currency),
            "window_micros": int(self.window),
            "n_windows": int(self.n_windows),
            "velocity": "signed" if self.signed else "absolute",
            "degenerate_depths": [int(g) for g in self.degenerate],
            "correlation_curve": [[int(g), float(c)] for g, c in self.correlation_curve],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


@dataclass
class DepthPanel:
    """Per-window match-price moves and binned reacted volume for a depth grid."""

    t_end: np.ndarray
    dprice: np.ndarray  # p*(T) - p*(T-W), ticks
    binned: np.ndarray  # windows x len(grid); volume whose band key falls in each grid cell
    grid: np.ndarray
    window: int

    def reacted(self) -> np.ndarray:
        """Cumulative over depth: reacted volume within each grid depth."""
        return np.cumsum(self.binned, axis=1)


def depth_panel(events: Iterable[OrderEvent], depth_grid: Optional[Sequence[int]] = None,
                window: int = DEFAULT_WINDOW, *, quotes: str = "book", strict: bool = False) -> DepthPanel:
    """Replay ``events`` on a ``window`` grid and bin reacted volume by depth.

    Windows without both reference quotes or without a match price at both
    ends are dropped. Memory grows with the number of windows only.
    """
    grid = None if depth_grid is None else np.unique(np.asarray(depth_grid, dtype=np.int64))
    if grid is not None and (len(grid) == 0 or grid[0] < 0):
        raise ValueError("depth grid must be non-empty and non-negative")
    t_end, dprice, rows = [], [], []
    for fr in sample_frames(events, window, quotes=quotes, strict=strict):
        if not fr.has_refs or fr.ref_p_star is None or fr.p_star is None:
            continue
        if grid is None:
            grid = default_depth_grid((fr.ref_bid + fr.ref_ask) / 2)
        b, a = fr.ref_bid, fr.ref_ask
        keys, sizes = [], []
        for ev in fr.events:
            s = _reaction(ev)
            if s:
                p = ev.price
                k = b - p
                if p - a > k:
                    k = p - a
                keys.append(k if k > 0 else 0)
                sizes.append(s)
        n = len(grid)
        if keys:
            cells = np.searchsorted(grid, np.asarray(keys, dtype=np.int64), side="left")
            row = np.bincount(cells, weights=np.asarray(sizes, dtype=np.float64), minlength=n + 1)[:n]
        else:
            row = np.zeros(n)
        t_end.append(fr.t_end)
        dprice.append(fr.p_star - fr.ref_p_star)
        rows.append(row)
    if grid is None:
        raise InsufficientData("no window has reference quotes and a match price")
    binned = np.vstack(rows) if rows else np.zeros((0, len(grid)))
    return DepthPanel(np.asarray(t_end, dtype=np.int64), np.asarray(dprice, dtype=np.int64),
                      binned, grid, window)


def correlation_sweep(x: np.ndarray, volumes: np.ndarray):
    """Pearson correlation of ``x`` with every column of ``volumes``.

    Returns ``(corr, degenerate_mask)``; degenerate (constant) columns get NaN.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(volumes, dtype=np.float64)
    xc = x - x.mean()
    sx = np.sqrt(np.dot(xc, xc))
    if sx == 0:
        raise DegenerateSeries("match-price velocity series is constant")
    yc = y - y.mean(axis=0)
    sy = np.sqrt(np.einsum("ij,ij->j", yc, yc))
    degenerate = sy == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (xc @ yc) / (sx * sy)
    corr[degenerate] = np.nan
    return corr, degenerate


def _alpha_from_panel(panel: DepthPanel, rows: slice, *, signed: bool, tick_size,
                      min_windows: int) -> ActiveDepth:
    dp = panel.dprice[rows]
    n = len(dp)
    if n < min_windows:
        raise InsufficientData(f"{n} usable windows, need at least {min_windows}")
    x = dp if signed else np.abs(dp)
    corr, degenerate = correlation_sweep(x, panel.reacted()[rows])
    if np.all(degenerate):
        raise DegenerateSeries("reacted volume is constant at every depth")
    best = int(np.nanargmax(corr))  # first maximum: ties go to the shallower depth
    alpha = int(panel.grid[best])
    curve = [(int(g), float(c)) for g, c, d in zip(panel.grid, corr, degenerate) if not d]
    return ActiveDepth(alpha, Decimal(alpha) * Decimal(str(tick_size)), curve, panel.window, n,
                       [int(g) for g in panel.grid[degenerate]], signed)


def active_depth(events: Iterable[OrderEvent], depth_grid: Optional[Sequence[int]] = None,
                 window: int = DEFAULT_WINDOW, *, signed: bool = False, tick_size="1",
                 quotes: str = "book", strict: bool = False, min_windows: int = MIN_WINDOWS) -> ActiveDepth:
    """Depth maximizing the correlation between match-price moves and reacted volume.

    Per window the absolute match-price change (``signed=True`` keeps the
    sign) is correlated with the reacted volume inside each candidate depth.
    The argmax over the grid is the active depth; ties go to the smallest
    depth. Depths whose volume series is constant are excluded and listed in
    ``degenerate``.
    """
    panel = depth_panel(events, depth_grid, window, quotes=quotes, strict=strict)
    return _alpha_from_panel(panel, slice(None), signed=signed, tick_size=tick_size,
                             min_windows=min_windows)


def rolling_active_depth(events: Iterable[OrderEvent], session: int, depth_grid=None,
                         window: int = DEFAULT_WINDOW, *, signed: bool = False, tick_size="1",
                         quotes: str = "book", min_windows: int = MIN_WINDOWS) -> list:
    """Re-estimate the active depth on consecutive blocks of ``session`` micros.

    Returns ``[(block_start, ActiveDepth or None)]``; blocks that are too short
    or degenerate yield ``None``.
    """
    panel = depth_panel(events, depth_grid, window, quotes=quotes)
    if len(panel.t_end) == 0:
        return []
    block = (panel.t_end - window) // session
    out = []
    for b in np.unique(block):
        idx = np.flatnonzero(block == b)
        try:
            ad = _alpha_from_panel(panel, slice(idx[0], idx[-1] + 1), signed=signed,
                                   tick_size=tick_size, min_windows=min_windows)
        except (InsufficientData, DegenerateSeries):
            ad = None
        out.append((int(b) * session, ad))
    return out


# -- order velocity --------------------------------------------------------

@dataclass(frozen=True)
class VelocityRecord:
    event: OrderEvent
    role: Role
    size: int
    displacement: int  # ticks
    v: Fraction  # quote units per second
    effective_price: int
    in_active_area: bool


def _role_and_size(ev: OrderEvent):
    kind = ev.kind
    if kind is OPEN or kind is MATCH:
        return (Role.SUBMIT_BUY if ev.side is BUY else Role.SUBMIT_SELL), ev.size
    if kind is CANCEL:
        return (Role.CANCEL_BUY if ev.side is BUY else Role.CANCEL_SELL), ev.size
    if kind is CHANGE and ev.prev_size is not None:
        delta = ev.size - ev.prev_size
        if delta >= 0:
            return (Role.SUBMIT_BUY if ev.side is BUY else Role.SUBMIT_SELL), delta
        return (Role.CANCEL_BUY if ev.side is BUY else Role.CANCEL_SELL), -delta
    return None, 0


def displacement(role: Role, price: int, ref_bid: int, ref_ask: int, alpha: int):
    """``(displacement_ticks, effective_price, in_active_area)`` for one activity."""
    if role is Role.SUBMIT_BUY:
        p = price if price < ref_ask else ref_ask
        d = p - (ref_bid - alpha)
    elif role is Role.CANCEL_BUY:
        p = price
        d = (ref_bid - alpha) - p
    elif role is Role.SUBMIT_SELL:
        p = price if price > ref_bid else ref_bid
        d = p - (ref_ask + alpha)
    else:
        p = price
        d = (ref_ask + alpha) - p
    return d, p, ref_bid - alpha <= p <= ref_ask + alpha


def order_velocity(ev: OrderEvent, frame: Frame, alpha: int, dt: Optional[int] = None,
                   tick_size=1) -> Optional[VelocityRecord]:
    """Velocity of one submission or cancellation against the frame's reference quotes.

    Returns ``None`` for events that are not order activity (orphans, or
    changes without a known previous size). Velocity is in ``tick_size``
    units per second.
    """
    dt = frame.dt if dt is None else dt
    role, size = _role_and_size(ev) if not ev.orphan else (None, 0)
    if role is None:
        return None
    d, p_eff, inside = displacement(role, ev.price, frame.ref_bid, frame.ref_ask, alpha)
    v = Fraction(d) * Fraction(tick_size) * MICROS / dt
    return VelocityRecord(ev, role, size, d, v, p_eff, inside)


# -- energy / momentum -----------------------------------------------------

_COLUMNS = ("e_incr", "p_incr", "E_cum", "P_cum", "e_limit", "p_limit", "e_market", "p_market")


@dataclass
class PhysicsSeries:
    """Per-frame kinetic energy and momentum increments and their prefix sums.

    ``exact`` holds the integer accumulators per frame: ``sd_limit``,
    ``sd2_limit``, ``sd_market``, ``sd2_market`` (size times tick
    displacement, and times its square). Float series are these scaled to
    quote units per second: ``p = sd * tick / dt`` and
    ``e = sd2 * tick**2 / (2 dt**2)``.
    """

    t: np.ndarray
    e_incr: np.ndarray
    p_incr: np.ndarray
    E_cum: np.ndarray
    P_cum: np.ndarray
    e_limit: np.ndarray
    p_limit: np.ndarray
    e_market: np.ndarray
    p_market: np.ndarray
    exact: dict
    alpha: int
    dt: int
    tick_size: str = "1"
    counts: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def window_increments(self, grid: np.ndarray, column: str = "p_incr") -> np.ndarray:
        """Sum of ``column`` over ``(g - step, g]`` for consecutive grid points.

        Returns ``len(grid) - 1`` values; the cumulative column is looked up
        at or before each grid point.
        """
        cum = np.concatenate([[0.0], np.cumsum(getattr(self, column))])
        idx = np.searchsorted(self.t, grid, side="right")
        at = cum[idx]
        return np.diff(at)

    def cumulative_at(self, grid: np.ndarray, column: str = "p_incr") -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(getattr(self, column))])
        return cum[np.searchsorted(self.t, grid, side="right")]

    def write_csv(self, fh) -> None:
        fh.write("t_micros," + ",".join(_COLUMNS) + "\n")
        cols = [getattr(self, c) for c in _COLUMNS]
        for i, t in enumerate(self.t):
            fh.write(f"{int(t)}," + ",".join(repr(float(c[i])) for c in cols) + "\n")


def physics_series(events: Iterable[OrderEvent], alpha: int, dt: int = DEFAULT_DT, *,
                   tick_size="1", quotes: str = "book", strict: bool = False,
                   frames: Optional[Iterable[Frame]] = None) -> PhysicsSeries:
    """Fold an event stream into per-frame energy and momentum increments.

    ``alpha`` is the active depth in ticks. Pass ``frames`` to reuse an
    existing frame stream (``events`` is then ignored).
    """
    if frames is None:
        frames = sample_frames(events, dt, quotes=quotes, strict=strict)
    t_out = []
    sd_l, sd2_l, sd_m, sd2_m = [], [], [], []
    no_ref = outside = counted = 0
    for fr in frames:
        l1 = l2 = m1 = m2 = 0
        b, a = fr.ref_bid, fr.ref_ask
        if b is None or a is None:
            no_ref += len(fr.events)
        else:
            lo, hi = b - alpha, a + alpha
            for ev in fr.events:
                if ev.orphan:
                    continue
                kind = ev.kind
                s = ev.size
                p = ev.price
                if kind is CHANGE:
                    if ev.prev_size is None:
                        continue
                    s = ev.size - ev.prev_size
                    submit = s > 0
                    if not submit:
                        s = -s
                    if s == 0:
                        continue
                else:
                    submit = kind is not CANCEL
                if ev.side is BUY:
                    if submit:
                        if p > a:
                            p = a
                        d = p - lo
                    else:
                        d = lo - p
                else:
                    if submit:
                        if p < b:
                            p = b
                        d = p - hi
                    else:
                        d = hi - p
                if p < lo or p > hi:
                    outside += 1
                    continue
                counted += 1
                sd = s * d
                if ev.aggressiveness is MARKET:
                    m1 += sd
                    m2 += sd * d
                else:
                    l1 += sd
                    l2 += sd * d
        t_out.append(fr.t_end)
        sd_l.append(l1)
        sd2_l.append(l2)
        sd_m.append(m1)
        sd2_m.append(m2)

    tick = Fraction(str(tick_size))
    p_scale = tick * MICROS / dt
    e_scale = tick * tick * MICROS * MICROS / (2 * dt * dt)
    exact = {k: np.array(v, dtype=object) for k, v in
             (("sd_limit", sd_l), ("sd2_limit", sd2_l), ("sd_market", sd_m), ("sd2_market", sd2_m))}
    sd_tot = exact["sd_limit"] + exact["sd_market"]
    sd2_tot = exact["sd2_limit"] + exact["sd2_market"]

    def scaled(arr, scale):
        # int / int is correctly rounded: one rounding from the exact rational value
        num, den = scale.numerator, scale.denominator
        return np.array([x * num / den if x else 0.0 for x in arr], dtype=np.float64)

    e_incr, p_incr = scaled(sd2_tot, e_scale), scaled(sd_tot, p_scale)
    return PhysicsSeries(
        t=np.asarray(t_out, dtype=np.int64),
        e_incr=e_incr, p_incr=p_incr,
        E_cum=np.cumsum(e_incr), P_cum=np.cumsum(p_incr),
        e_limit=scaled(exact["sd2_limit"], e_scale), p_limit=scaled(exact["sd_limit"], p_scale),
        e_market=scaled(exact["sd2_market"], e_scale), p_market=scaled(exact["sd_market"], p_scale),
        exact=exact, alpha=int(alpha), dt=int(dt), tick_size=str(tick_size),
        counts={"counted": counted, "outside_active_area": outside, "no_reference": no_ref},
    )
