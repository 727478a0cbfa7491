"""Timestamped scalar series and regular-grid helpers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class MeasureSeries:
    name: str
    t: np.ndarray  # micros
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    exact: Optional[list] = None  # rational values where the measure is exact

    def __len__(self):
        return len(self.t)

    def at(self, grid: np.ndarray, fill=np.nan) -> np.ndarray:
        """Last value at or before each grid point (``fill`` before the first)."""
        return last_at_or_before(self.t, self.values, grid, fill)

    def write_long_csv(self, fh) -> None:
        fh.write("t_micros,measure,value\n")
        for t, v in zip(self.t, self.values):
            fh.write(f"{int(t)},{self.name},{float(v)!r}\n")


def regular_grid(start: int, end: int, step: int) -> np.ndarray:
    """Multiples of ``step`` covering ``[start, end]``."""
    lo = -(-int(start) // step) * step
    hi = -(-int(end) // step) * step
    return np.arange(lo, hi + 1, step, dtype=np.int64)


def last_at_or_before(ts: np.ndarray, values: np.ndarray, grid: np.ndarray, fill=np.nan) -> np.ndarray:
    """Forward-filled sampling of an irregular series onto ``grid``."""
    ts = np.asarray(ts)
    values = np.asarray(values, dtype=np.float64)
    idx = np.searchsorted(ts, grid, side="right") - 1
    out = np.full(len(grid), fill, dtype=np.float64)
    ok = idx >= 0
    out[ok] = values[idx[ok]]
    return out


def window_sums(ts: np.ndarray, values: np.ndarray, grid: np.ndarray, step: int) -> np.ndarray:
    """Sum of values with timestamp in ``(g - step, g]`` for each grid point."""
    ts = np.asarray(ts)
    cum = np.concatenate([[0.0], np.cumsum(np.asarray(values, dtype=np.float64))])
    hi = np.searchsorted(ts, grid, side="right")
    lo = np.searchsorted(ts, grid - step, side="right")
    return cum[hi] - cum[lo]
