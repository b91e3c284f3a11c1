"""Equity-line performance metrics.

All quantities are decimal fractions (0.1 means 10%). Ratios whose
denominator vanishes are reported as ``nan`` rather than raising.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING

import numpy as np

from .errors import Misalignment, TooShort

if TYPE_CHECKING:
    from .signals import SignalSeries

UNDEFINED = float("nan")

TRADING_DAYS = 252

REPORT_FIELDS = ("aRC", "aSD", "MD", "MLD", "IR1", "IR2", "IR3", "nObs", "nTrades")


@dataclass(frozen=True)
class EquityLine:
    timestamps: np.ndarray
    values: np.ndarray
    periods_per_year: float = TRADING_DAYS

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype="datetime64[ns]", copy=True)
        v = np.array(self.values, dtype=float, copy=True)
        if len(ts) != len(v):
            raise Misalignment("equity timestamps and values differ in length")
        if len(v) == 0:
            raise TooShort("empty equity line")
        if not np.all(v > 0):
            raise ValueError("equity values must be positive")
        if not math.isclose(v[0], 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"equity line must start at 1.0, got {v[0]!r}")
        if self.periods_per_year <= 0:
            raise ValueError("periods_per_year must be positive")
        ts.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, timestamps, values, periods_per_year: float = TRADING_DAYS) -> "EquityLine":
        v = np.asarray(values, dtype=float)
        return cls(timestamps, v / v[0], periods_per_year)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def returns(self) -> np.ndarray:
        return self.values[1:] / self.values[:-1] - 1.0


@dataclass(frozen=True)
class PerfReport:
    aRC: float
    aSD: float
    MD: float
    MLD: float
    IR1: float
    IR2: float
    IR3: float
    nObs: int
    nTrades: int

    def to_dict(self) -> dict:
        """Plain dict with ``None`` in place of undefined ratios (JSON-safe)."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                v = None
            out[f.name] = v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_values(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in REPORT_FIELDS]

    def to_csv_row(self, header: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(REPORT_FIELDS)
        w.writerow(self.csv_values())
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "PerfReport":
        vals = {}
        for name in REPORT_FIELDS:
            v = d[name]
            if name in ("nObs", "nTrades"):
                vals[name] = int(v)
            else:
                vals[name] = UNDEFINED if v is None or v == "" else float(v)
        return cls(**vals)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if not math.isfinite(v):
        return ""
    return repr(float(v))


def annualized_return_compounded(eq: EquityLine) -> float:
    n = len(eq) - 1
    if n < 2:
        raise TooShort(f"aRC needs at least 2 return periods, got {n}")
    growth = eq.values[-1] / eq.values[0]
    return float(growth ** (eq.periods_per_year / n) - 1.0)


def annualized_std(returns, periods_per_year: float = TRADING_DAYS) -> float:
    # Sample std (ddof=1) scaled by sqrt(periods_per_year).
    r = np.asarray(returns, dtype=float)
    if len(r) < 2:
        raise TooShort(f"aSD needs at least 2 returns, got {len(r)}")
    return float(math.sqrt(periods_per_year) * np.std(r, ddof=1))


def max_drawdown(eq: EquityLine) -> float:
    v = eq.values
    peaks = np.maximum.accumulate(v)
    return float(np.max((peaks - v) / peaks))


def max_loss_duration(eq: EquityLine) -> float:
    """Longest peak-to-recovery stretch in years.

    A stretch runs from a running-maximum peak to the first strictly higher
    value. A new high on the very next period is no loss at all and counts as
    zero; a drawdown still open at the end is counted through the last point.
    """
    v = eq.values
    longest = 0
    peak_idx = 0
    peak = v[0]
    for i in range(1, len(v)):
        if v[i] > peak:
            if i - peak_idx > 1:
                longest = max(longest, i - peak_idx)
            peak, peak_idx = v[i], i
    longest = max(longest, len(v) - 1 - peak_idx)
    return longest / eq.periods_per_year


def information_ratios(arc: float, asd: float, md: float, mld: float) -> tuple[float, float, float]:
    ir1 = arc / asd if asd > 0 else UNDEFINED
    ir2 = arc * arc * np.sign(arc) / (asd * md) if asd * md > 0 else UNDEFINED
    ir3 = arc**3 / (asd * md * mld) if asd > 0 and md > 0 and mld > 0 else UNDEFINED
    return float(ir1), float(ir2), float(ir3)


def count_trades(sig: "SignalSeries | np.ndarray") -> int:
    """Position changes, counting entry from and exit to a flat book."""
    pos = np.asarray(getattr(sig, "positions", sig), dtype=int)
    padded = np.concatenate([[0], pos, [0]])
    return int(np.count_nonzero(np.diff(padded)))


def performance_report(eq: EquityLine, sig: "SignalSeries | None" = None, n_trades: int | None = None) -> PerfReport:
    """All metrics for one equity line.

    ``sig`` supplies the trade count; ensembles pass ``n_trades`` directly.
    When given, ``sig`` must hold one position per equity period.
    """
    if sig is not None:
        if len(sig.positions) != len(eq) - 1:
            raise Misalignment(f"{len(sig.positions)} positions for {len(eq) - 1} equity periods")
        if not np.array_equal(sig.timestamps, eq.timestamps[:-1]):
            raise Misalignment("signal timestamps must equal equity timestamps minus the last")
        n_trades = count_trades(sig)
    arc = annualized_return_compounded(eq)
    asd = annualized_std(eq.returns, eq.periods_per_year)
    md = max_drawdown(eq)
    mld = max_loss_duration(eq)
    ir1, ir2, ir3 = information_ratios(arc, asd, md, mld)
    return PerfReport(arc, asd, md, mld, ir1, ir2, ir3, len(eq), int(n_trades or 0))
