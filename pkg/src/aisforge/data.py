"""Price loading, validation, return computation and calendar alignment.

Timestamps are held as ``numpy.datetime64[ns]`` arrays in UTC without a
timezone attribute. All containers are frozen and their arrays are made
read-only, so they can be shared freely between threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import (
    EmptyIntersection,
    EmptySeries,
    FrequencyMismatch,
    NonMonotonicTimestamps,
    ParseError,
)


class Frequency(str, enum.Enum):
    DAILY = "daily"
    HOURLY = "hourly"


def _frozen(a, dtype=None) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _as_timestamps(ts) -> np.ndarray:
    idx = pd.DatetimeIndex(ts)
    if idx.tz is not None:
        idx = idx.tz_convert("UTC").tz_localize(None)
    return _frozen(idx.values, "datetime64[ns]")


@dataclass(frozen=True)
class ColumnSchema:
    """Names of the CSV columns holding the timestamp and the close price."""

    timestamp: str = "timestamp"
    close: str = "close"


@dataclass(frozen=True)
class PriceSeries:
    asset_id: str
    frequency: Frequency
    timestamps: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "frequency", Frequency(self.frequency))
        object.__setattr__(self, "timestamps", _as_timestamps(self.timestamps))
        object.__setattr__(self, "prices", _frozen(self.prices, float))
        if len(self.prices) != len(self.timestamps):
            raise ValueError("timestamps and prices differ in length")
        if len(self.prices) < 2:
            raise EmptySeries(f"{self.asset_id}: need at least 2 prices")
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices <= 0):
            raise ValueError(f"{self.asset_id}: prices must be finite and > 0")
        if np.any(np.diff(self.timestamps) <= np.timedelta64(0, "ns")):
            raise NonMonotonicTimestamps(self.asset_id)

    def __len__(self) -> int:
        return len(self.prices)


@dataclass(frozen=True)
class ReturnSeries:
    """Period returns; entry ``t`` is the move from price ``t`` to ``t + 1``
    of the source series and is stamped with the later timestamp."""

    asset_id: str
    frequency: Frequency
    timestamps: np.ndarray
    log_returns: np.ndarray
    simple_returns: np.ndarray
    # Kept so the price path can be rebuilt; not part of the alignment key.
    initial_price: float = field(default=1.0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "frequency", Frequency(self.frequency))
        object.__setattr__(self, "timestamps", _as_timestamps(self.timestamps))
        object.__setattr__(self, "log_returns", _frozen(self.log_returns, float))
        object.__setattr__(self, "simple_returns", _frozen(self.simple_returns, float))
        n = len(self.timestamps)
        if len(self.log_returns) != n or len(self.simple_returns) != n:
            raise ValueError("returns and timestamps differ in length")
        if n == 0:
            raise EmptySeries(self.asset_id)
        if np.any(self.simple_returns <= -1.0):
            raise ValueError("simple returns must exceed -1")
        if n > 1 and np.any(np.diff(self.timestamps) <= np.timedelta64(0, "ns")):
            raise NonMonotonicTimestamps(self.asset_id)

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReturnSeries):
            return NotImplemented
        return (
            self.asset_id == other.asset_id
            and self.frequency == other.frequency
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.log_returns, other.log_returns)
            and np.array_equal(self.simple_returns, other.simple_returns)
        )

    __hash__ = None

    @classmethod
    def from_log_returns(
        cls,
        asset_id: str,
        timestamps,
        log_returns,
        frequency: Frequency | str = Frequency.DAILY,
        initial_price: float = 1.0,
    ) -> "ReturnSeries":
        lr = np.asarray(log_returns, dtype=float)
        return cls(asset_id, Frequency(frequency), timestamps, lr, np.expm1(lr), initial_price)

    def slice(self, start: int, stop: int) -> "ReturnSeries":
        price0 = self.initial_price * float(np.exp(np.sum(self.log_returns[:start])))
        return ReturnSeries(
            self.asset_id,
            self.frequency,
            self.timestamps[start:stop],
            self.log_returns[start:stop],
            self.simple_returns[start:stop],
            price0,
        )

    def select(self, mask: np.ndarray) -> "ReturnSeries":
        return ReturnSeries(
            self.asset_id,
            self.frequency,
            self.timestamps[mask],
            self.log_returns[mask],
            self.simple_returns[mask],
            self.initial_price,
        )


def load_price_csv(
    path: str | Path,
    schema: ColumnSchema | None = None,
    asset_id: str | None = None,
    frequency: Frequency | str = Frequency.DAILY,
) -> PriceSeries:
    """Read one asset's close prices from a headed, UTF-8 CSV file.

    Raises:
        FileNotFoundError: ``path`` does not exist.
        ParseError: a row has an unparsable timestamp or a missing,
            unparsable or non-positive price (1-based data row reported).
        NonMonotonicTimestamps: timestamps are not strictly increasing.
        EmptySeries: fewer than two rows.
    """
    schema = schema or ColumnSchema()
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    df = pd.read_csv(path, dtype=str, encoding="utf-8", keep_default_na=False)
    for col in (schema.timestamp, schema.close):
        if col not in df.columns:
            raise ParseError(0, f"missing column {col!r}")
    if len(df) < 2:
        raise EmptySeries(f"{path}: {len(df)} rows")

    ts = pd.to_datetime(df[schema.timestamp].str.strip(), utc=True, errors="coerce", format="ISO8601")
    px = pd.to_numeric(df[schema.close].str.strip(), errors="coerce")
    for i in range(len(df)):
        if pd.isna(ts.iloc[i]):
            raise ParseError(i + 1, f"bad timestamp {df[schema.timestamp].iloc[i]!r}")
        p = px.iloc[i]
        if pd.isna(p) or not np.isfinite(p) or p <= 0:
            raise ParseError(i + 1, f"bad price {df[schema.close].iloc[i]!r}")

    values = ts.dt.tz_localize(None).values
    if np.any(np.diff(values) <= np.timedelta64(0, "ns")):
        raise NonMonotonicTimestamps(str(path))
    return PriceSeries(asset_id or path.stem, Frequency(frequency), values, px.to_numpy(float))


def compute_returns(prices: PriceSeries) -> ReturnSeries:
    p = prices.prices
    if len(p) < 2:
        raise EmptySeries(prices.asset_id)
    ratio = p[1:] / p[:-1]
    return ReturnSeries(
        prices.asset_id,
        prices.frequency,
        prices.timestamps[1:],
        np.log(ratio),
        ratio - 1.0,
        float(p[0]),
    )


def rebuild_prices(returns: ReturnSeries) -> np.ndarray:
    """Price path implied by compounding the simple returns from the initial price."""
    return returns.initial_price * np.concatenate([[1.0], np.cumprod(1.0 + returns.simple_returns)])


def align_intersection(series: Sequence[ReturnSeries]) -> list[ReturnSeries]:
    """Restrict every series to the timestamps they all share."""
    if len(series) < 2:
        raise ValueError("need at least two series to align")
    freqs = {s.frequency for s in series}
    if len(freqs) > 1:
        raise FrequencyMismatch(", ".join(sorted(f.value for f in freqs)))
    common = reduce(np.intersect1d, [s.timestamps for s in series])
    if len(common) == 0:
        raise EmptyIntersection(", ".join(s.asset_id for s in series))
    return [s.select(np.isin(s.timestamps, common)) for s in series]
