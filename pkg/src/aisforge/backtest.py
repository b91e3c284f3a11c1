"""Walk-forward plans, position-to-equity compounding and single-strategy runs.

Alignment convention: a position stamped at return index ``t`` is held over
return ``t + 1``. For a plan whose first test return is ``first_train``,
positions cover return timestamps ``first_train - 1 .. n - 2`` and the
equity line covers ``first_train - 1 .. n - 1``, so the equity line is one
point longer than the signal series and starts at 1.0 on the first
decision timestamp.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import pandas as pd

from .arima_garch import RollingConfig, rolling_signal
from .data import ReturnSeries
from .errors import Misalignment, SeriesTooShort
from .lstm import LstmConfig, PredictionLog, walk_forward_predict
from .metrics import TRADING_DAYS, EquityLine, PerfReport, performance_report
from .signals import SignalSeries, contrarian_signal, momentum_signal

logger = logging.getLogger(__name__)

MODELS = ("contrarian", "momentum", "arima_garch", "lstm", "buy_and_hold")


@dataclass(frozen=True)
class Segment:
    train: range
    val: range
    test: range


@dataclass(frozen=True)
class WalkForwardPlan:
    segments: tuple[Segment, ...]
    n_obs: int

    @property
    def first_test(self) -> int:
        return self.segments[0].test.start

    @property
    def test_indices(self) -> np.ndarray:
        return np.concatenate([np.arange(s.test.start, s.test.stop) for s in self.segments])


def build_plan(n_obs: int, first_train: int = 252, test_len: int = 252, val_frac: float = 0.33) -> WalkForwardPlan:
    """Expanding-window plan over ``n_obs`` returns.

    Segment ``k`` trains on ``[0, first_train + k * test_len)`` and tests on
    the following ``test_len`` returns (the last test window may be shorter);
    validation is the final ``ceil(val_frac * train)`` returns of the train range.
    """
    if first_train < 1 or test_len < 1:
        raise ValueError("first_train and test_len must be positive")
    if not 0 < val_frac < 1:
        raise ValueError("val_frac must lie in (0, 1)")
    if n_obs < first_train + 1:
        raise SeriesTooShort(f"{n_obs} observations leave no test point after {first_train}")
    segments = []
    end = first_train
    while end < n_obs:
        stop = min(end + test_len, n_obs)
        n_val = math.ceil(round(val_frac * end, 9))
        segments.append(Segment(range(0, end), range(end - n_val, end), range(end, stop)))
        end = stop
    return WalkForwardPlan(tuple(segments), n_obs)


def signals_to_equity(sig: SignalSeries, returns: ReturnSeries, cost_rate: float = 0.0,
                      periods_per_year: float = TRADING_DAYS) -> EquityLine:
    """Compound positions into an equity line at unit leverage.

    ``EQ[t+1] = EQ[t] * (1 + pos[t] * R[t+1]) - cost_rate * EQ[t] * |pos[t+1] - pos[t]|``
    with the book flattened after the last position.
    """
    ts = returns.timestamps
    if len(sig) == 0:
        raise Misalignment("empty signal series")
    idx = np.searchsorted(ts, sig.timestamps)
    if np.any(idx >= len(ts)) or not np.array_equal(ts[np.minimum(idx, len(ts) - 1)], sig.timestamps):
        raise Misalignment("signal timestamps are not return timestamps")
    if np.any(np.diff(idx) != 1):
        raise Misalignment("signal timestamps must be consecutive return timestamps")
    if idx[-1] + 1 >= len(ts):
        raise Misalignment("last position has no following return")
    nxt = returns.simple_returns[idx + 1]
    pos = sig.positions.astype(float)
    growth = 1.0 + pos * nxt
    if cost_rate:
        turnover = np.abs(np.diff(np.concatenate([pos, [0.0]])))
        growth = growth - cost_rate * turnover
    values = np.concatenate([[1.0], np.cumprod(growth)])
    stamps = np.concatenate([[ts[idx[0]]], ts[idx + 1]])
    return EquityLine(stamps, values, periods_per_year)


@dataclass
class BacktestConfig:
    first_train: int = 252
    test_len: int = 252
    val_frac: float = 0.33
    cost_rate: float = 0.0
    periods_per_year: float = TRADING_DAYS
    lstm: LstmConfig = field(default_factory=LstmConfig)
    garch: RollingConfig = field(default_factory=RollingConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lstm"] = self.lstm.to_dict()
        return d


@dataclass
class StrategyRun:
    asset_id: str
    model: str
    signals: SignalSeries | None
    equity: EquityLine
    report: PerfReport
    config: dict = field(default_factory=dict)
    seed: int = 0
    logs: dict = field(default_factory=dict)

    @property
    def run_id(self) -> str:
        return f"{self.asset_id}__{self.model}"


SignalGenerator = Callable[[ReturnSeries, WalkForwardPlan, BacktestConfig, int], SignalSeries]


def _oos(returns: ReturnSeries, plan: WalkForwardPlan) -> slice:
    return slice(plan.first_test - 1, plan.n_obs - 1)


def _buy_and_hold(returns, plan, config, seed, logs):
    sl = _oos(returns, plan)
    ts = returns.timestamps[sl]
    return SignalSeries(returns.asset_id, ts, np.ones(len(ts), dtype=int))


def _contrarian(returns, plan, config, seed, logs):
    sl = _oos(returns, plan)
    return contrarian_signal(returns).slice(sl.start, sl.stop)


def _momentum(returns, plan, config, seed, logs):
    sl = _oos(returns, plan)
    return momentum_signal(returns).slice(sl.start, sl.stop)


def _arima_garch(returns, plan, config, seed, logs):
    cfg = config.garch
    if cfg.first_oos != plan.first_test:
        cfg = RollingConfig(**{**asdict(cfg), "first_oos": plan.first_test})
    sig, log = rolling_signal(returns, cfg)
    logs["forecast_log"] = log
    return sig


def _lstm(returns, plan, config, seed, logs):
    log = PredictionLog()
    sig = walk_forward_predict(returns, plan, config.lstm, seed=seed, log=log)
    logs["predictions"] = log
    return sig


_GENERATORS = {
    "buy_and_hold": _buy_and_hold,
    "contrarian": _contrarian,
    "momentum": _momentum,
    "arima_garch": _arima_garch,
    "lstm": _lstm,
}


def generate_signals(returns: ReturnSeries, model: str, plan: WalkForwardPlan,
                     config: BacktestConfig, seed: int = 0, logs: dict | None = None) -> SignalSeries:
    if model not in _GENERATORS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    return _GENERATORS[model](returns, plan, config, seed, {} if logs is None else logs)


def run_strategy(returns: ReturnSeries, model: str | SignalGenerator, config: BacktestConfig | None = None,
                 seed: int = 0) -> StrategyRun:
    """Signals over the out-of-sample span, their equity line and report.

    ``model`` is one of :data:`MODELS` or a callable
    ``(returns, plan, config, seed) -> SignalSeries`` stamped like the built-ins.
    """
    config = config or BacktestConfig()
    plan = build_plan(len(returns), config.first_train, config.test_len, config.val_frac)
    logs: dict = {}
    if callable(model):
        name = getattr(model, "__name__", "custom")
        sig = model(returns, plan, config, seed)
    else:
        name = model
        sig = generate_signals(returns, model, plan, config, seed, logs)
    expected = returns.timestamps[_oos(returns, plan)]
    if not np.array_equal(sig.timestamps, expected):
        raise Misalignment(f"{name}: signals do not cover the out-of-sample decision timestamps")
    eq = signals_to_equity(sig, returns, config.cost_rate, config.periods_per_year)
    report = performance_report(eq, sig)
    ts = returns.timestamps
    cfg = {
        "asset_id": returns.asset_id,
        "model": name,
        "seed": seed,
        "backtest": config.to_dict(),
        "span": {
            "full_start": _iso(ts[0]),
            "full_end": _iso(ts[-1]),
            "full_nobs": len(ts) + 1,
            "oos_start": _iso(eq.timestamps[0]),
            "oos_end": _iso(eq.timestamps[-1]),
            "oos_nobs": len(eq),
        },
    }
    return StrategyRun(returns.asset_id, name, sig, eq, report, cfg, seed, logs)


# persistence ---------------------------------------------------------------

def _iso(t) -> str:
    return pd.Timestamp(t).isoformat()


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_equity_csv(eq: EquityLine, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "equity"])
        for t, v in zip(eq.timestamps, eq.values):
            w.writerow([_iso(t), repr(float(v))])


def read_equity_csv(path: str | Path, periods_per_year: float = TRADING_DAYS) -> EquityLine:
    df = pd.read_csv(path, float_precision="round_trip")
    return EquityLine(pd.to_datetime(df["timestamp"], format="ISO8601").values, df["equity"].to_numpy(float),
                      periods_per_year)


def save_run(run: StrategyRun, directory: str | Path) -> Path:
    """Write ``signals.csv`` (single-model runs), ``equity.csv``,
    ``report.json`` and ``config.json`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if run.signals is not None:
        run.signals.to_csv(d / "signals.csv")
    write_equity_csv(run.equity, d / "equity.csv")
    (d / "report.json").write_text(run.report.to_json() + "\n", encoding="utf-8")
    cfg = {**run.config, "run_id": run.run_id, "periods_per_year": run.equity.periods_per_year}
    cfg["config_hash"] = config_hash(cfg)
    (d / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    for name, log in run.logs.items():
        if hasattr(log, "to_csv"):
            log.to_csv(d / f"{name}.csv")
    return d


def load_run(directory: str | Path) -> StrategyRun:
    d = Path(directory)
    cfg = json.loads((d / "config.json").read_text(encoding="utf-8"))
    eq = read_equity_csv(d / "equity.csv", cfg.get("periods_per_year", TRADING_DAYS))
    report = PerfReport.from_dict(json.loads((d / "report.json").read_text(encoding="utf-8")))
    sig = None
    if (d / "signals.csv").exists():
        sig = SignalSeries.read_csv(d / "signals.csv", cfg.get("asset_id", ""))
    return StrategyRun(cfg.get("asset_id", ""), cfg.get("model", ""), sig, eq, report, cfg, cfg.get("seed", 0))
