"""Position series and the two return-sign strategies.

A position stamped at ``t`` is decided with information up to ``t`` and is
held over the following period.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import ReturnSeries


@dataclass(frozen=True)
class SignalSeries:
    asset_id: str
    timestamps: np.ndarray
    positions: np.ndarray
    forecasts: np.ndarray | None = None

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype="datetime64[ns]", copy=True)
        pos = np.array(self.positions, copy=True)
        if pos.size and not np.all(np.isin(pos, (-1, 0, 1))):
            raise ValueError("positions must be -1, 0 or +1")
        pos = pos.astype(np.int8)
        if len(pos) != len(ts):
            raise ValueError("positions and timestamps differ in length")
        ts.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "positions", pos)
        if self.forecasts is not None:
            fc = np.array(self.forecasts, dtype=float, copy=True)
            if len(fc) != len(ts):
                raise ValueError("forecasts and timestamps differ in length")
            fc.setflags(write=False)
            object.__setattr__(self, "forecasts", fc)

    def __len__(self) -> int:
        return len(self.positions)

    def __neg__(self) -> "SignalSeries":
        fc = None if self.forecasts is None else -self.forecasts
        return SignalSeries(self.asset_id, self.timestamps, -self.positions.astype(int), fc)

    def slice(self, start: int, stop: int) -> "SignalSeries":
        fc = None if self.forecasts is None else self.forecasts[start:stop]
        return SignalSeries(self.asset_id, self.timestamps[start:stop], self.positions[start:stop], fc)

    def select(self, mask) -> "SignalSeries":
        fc = None if self.forecasts is None else self.forecasts[mask]
        return SignalSeries(self.asset_id, self.timestamps[mask], self.positions[mask], fc)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "position", "forecast"])
            for i, t in enumerate(self.timestamps):
                fc = "" if self.forecasts is None else repr(float(self.forecasts[i]))
                w.writerow([_iso(t), int(self.positions[i]), fc])

    @classmethod
    def read_csv(cls, path: str | Path, asset_id: str = "") -> "SignalSeries":
        df = pd.read_csv(path, keep_default_na=False, dtype=str)
        ts = pd.to_datetime(df["timestamp"], format="ISO8601").values
        pos = df["position"].astype(int).to_numpy()
        fc = None
        if (df["forecast"] != "").all() and len(df):
            fc = df["forecast"].astype(float).to_numpy()
        return cls(asset_id, ts, pos, fc)


def _iso(t) -> str:
    return pd.Timestamp(t).isoformat()


def contrarian_signal(returns: ReturnSeries) -> SignalSeries:
    """Buy after a down period, sell after a flat or up one."""
    r = returns.log_returns
    pos = np.where(r < 0, 1, -1)
    return SignalSeries(returns.asset_id, returns.timestamps, pos, -r)


def momentum_signal(returns: ReturnSeries) -> SignalSeries:
    """Buy after a flat or up period, sell after a down one."""
    r = returns.log_returns
    pos = np.where(r >= 0, 1, -1)
    return SignalSeries(returns.asset_id, returns.timestamps, pos, r)
