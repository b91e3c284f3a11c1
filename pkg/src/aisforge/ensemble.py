"""Equal-weight ensembles of equity lines.

Type-I ensembles combine every model on one asset; type-II ensembles combine
one model across assets. Components are aligned on the intersection of their
timestamps and renormalised to start at 1.0 before combining.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .backtest import StrategyRun
from .errors import EmptyIntersection, MissingComponent
from .metrics import EquityLine, PerfReport, performance_report

TYPE1_MODELS = ("contrarian", "momentum", "arima_garch", "lstm")


def _common_timestamps(lines: Sequence[EquityLine]) -> np.ndarray:
    if not lines:
        raise EmptyIntersection("no components")
    common = lines[0].timestamps
    for ln in lines[1:]:
        common = np.intersect1d(common, ln.timestamps, assume_unique=True)
    if common.size == 0:
        raise EmptyIntersection("components share no timestamps")
    return common


def _ppy(lines: Sequence[EquityLine]) -> float:
    # Mixed calendars collapse onto the sparser one after intersection.
    return min(ln.periods_per_year for ln in lines)


def align_equity(lines: Sequence[EquityLine], timestamps=None) -> tuple[np.ndarray, np.ndarray]:
    """Common timestamps and a (k, T) matrix of renormalised component values.

    ``timestamps`` further restricts the intersection when given.
    """
    common = _common_timestamps(lines)
    if timestamps is not None:
        common = np.intersect1d(common, np.asarray(timestamps, dtype="datetime64[ns]"))
        if common.size == 0:
            raise EmptyIntersection("requested timestamps miss the component intersection")
    rows = []
    for ln in lines:
        v = ln.values[np.searchsorted(ln.timestamps, common)]
        rows.append(v / v[0])
    return common, np.vstack(rows)


def average_equity(components: Sequence[EquityLine], timestamps=None) -> EquityLine:
    """Pointwise mean of the aligned component lines."""
    ts, V = align_equity(components, timestamps)
    mean = V.mean(axis=0)
    return EquityLine(ts, mean / mean[0], _ppy(components))


def quarter_starts(timestamps) -> np.ndarray:
    """First timestamp of each calendar quarter after the first one present."""
    ts = pd.DatetimeIndex(np.asarray(timestamps, dtype="datetime64[ns]"))
    if len(ts) < 2:
        return np.array([], dtype="datetime64[ns]")
    q = ts.year * 4 + (ts.month - 1) // 3
    new = np.r_[False, q[1:] != q[:-1]]
    return ts.values[new]


def _resolve_calendar(calendar, ts: np.ndarray) -> np.ndarray:
    if calendar is None or (isinstance(calendar, str) and calendar == "quarterly"):
        return quarter_starts(ts)
    if isinstance(calendar, str):
        if calendar == "none":
            return np.array([], dtype="datetime64[ns]")
        raise ValueError(f"unknown rebalance calendar {calendar!r}")
    cal = np.asarray(list(calendar), dtype="datetime64[ns]")
    return cal[(cal > ts[0]) & np.isin(cal, ts)]


def _check_weights(weights, k: int) -> np.ndarray:
    if weights is None:
        return np.full(k, 1.0 / k)
    w = np.asarray(weights, dtype=float)
    if w.shape != (k,):
        raise ValueError(f"{w.size} weights for {k} components")
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-12):
        raise ValueError("weights must be non-negative and sum to 1")
    return w


def rebalanced_portfolio(components: Sequence[EquityLine], weights=None, calendar="quarterly",
                         timestamps=None) -> tuple[EquityLine, int]:
    """Fixed-weight portfolio of component lines, reset to target weights on
    each calendar date.

    Stakes drift with component returns between rebalances. ``calendar`` is
    ``"quarterly"`` (default), ``"none"`` or an iterable of timestamps; dates
    at or before the first common timestamp are ignored.

    Returns:
        The portfolio line and the number of rebalance dates applied.
    """
    ts, V = align_equity(components, timestamps)
    w = _check_weights(weights, len(components))
    cal = _resolve_calendar(calendar, ts)
    resets = np.searchsorted(ts, cal)
    bounds = np.r_[0, resets, len(ts) - 1]
    out = np.empty(len(ts))
    out[0] = 1.0
    level = 1.0
    for s, e in zip(bounds[:-1], bounds[1:]):
        if e <= s:
            continue
        growth = V[:, s + 1:e + 1] / V[:, s:s + 1]
        seg = level * (w @ growth)
        out[s + 1:e + 1] = seg
        level = seg[-1]
    return EquityLine(ts, out, _ppy(components)), len(cal)


def _combine(components: Sequence[EquityLine], method: str, calendar, timestamps=None):
    if method == "rebalanced":
        return rebalanced_portfolio(components, calendar=calendar, timestamps=timestamps)
    if method == "mean":
        return average_equity(components, timestamps), 0
    raise ValueError(f"unknown ensemble method {method!r}")


def _trades(run: StrategyRun) -> int:
    return int(run.report.nTrades)


def _ensemble_run(asset_id: str, model: str, kind: str, runs: Sequence[StrategyRun], method: str,
                  calendar, timestamps=None) -> StrategyRun:
    eq, n_rebal = _combine([r.equity for r in runs], method, calendar, timestamps)
    n_trades = sum(_trades(r) for r in runs) + len(runs) * n_rebal
    report = performance_report(eq, n_trades=n_trades)
    cfg = {
        "kind": kind,
        "asset_id": asset_id,
        "model": model,
        "components": [r.run_id for r in runs],
        "method": method,
        "calendar": calendar if isinstance(calendar, str) or calendar is None else "custom",
        "rebalance_dates": n_rebal,
    }
    return StrategyRun(asset_id, model, None, eq, report, cfg)


def ensemble_type1(runs: Mapping[str, StrategyRun], models: Sequence[str] = TYPE1_MODELS,
                   method: str = "rebalanced", calendar="quarterly", label: str = "ensemble") -> StrategyRun:
    """Equal-weight ensemble of every model's run on one asset.

    Args:
        runs: model name -> run, all for the same asset.
        method: ``"rebalanced"`` (quarterly reset portfolio) or ``"mean"``
            (plain average of equity lines, no rebalancing).
    """
    missing = [m for m in models if m not in runs]
    if missing:
        raise MissingComponent(f"type-I ensemble lacks {missing}")
    chosen = [runs[m] for m in models]
    assets = {r.asset_id for r in chosen}
    if len(assets) != 1:
        raise ValueError(f"type-I components span several assets: {sorted(assets)}")
    return _ensemble_run(chosen[0].asset_id, label, "typeI", chosen, method, calendar)


def ensemble_type2(model: str, runs: Mapping[str, StrategyRun], method: str = "rebalanced",
                   calendar="quarterly", asset_label: str = "ALL") -> StrategyRun:
    """Equal-weight ensemble of one model across assets, labelled ``<model>_all``.

    Args:
        runs: asset id -> run of ``model`` on that asset.
    """
    if len(runs) < 2:
        raise MissingComponent(f"type-II ensemble of {model} needs at least two assets, got {len(runs)}")
    chosen = [runs[a] for a in sorted(runs)]
    return _ensemble_run(asset_label, f"{model}_all", "typeII", chosen, method, calendar)


def restrict_run(run: StrategyRun, start, end) -> StrategyRun:
    """The run re-based to the window ``[start, end]`` with its report recomputed.

    Positions held over the window are kept so the trade count reflects the
    window. Runs without signals keep their original trade count.
    """
    start, end = np.datetime64(start, "ns"), np.datetime64(end, "ns")
    ts = run.equity.timestamps
    keep = (ts >= start) & (ts <= end)
    if keep.sum() == 0:
        raise EmptyIntersection(f"{run.run_id} has no data between {start} and {end}")
    eq = EquityLine.normalized(ts[keep], run.equity.values[keep], run.equity.periods_per_year)
    sig = None
    if run.signals is not None:
        sig = run.signals.select(np.isin(run.signals.timestamps, eq.timestamps[:-1]))
        report = performance_report(eq, sig)
    else:
        report = performance_report(eq, n_trades=run.report.nTrades)
    cfg = {**run.config, "window": [str(start), str(end)]}
    return StrategyRun(run.asset_id, run.model, sig, eq, report, cfg, run.seed)


@dataclass
class PairResult:
    """Four hedging rows for a base asset and one candidate."""

    base: str
    candidate: str
    spx: StrategyRun
    spx_ensemble: StrategyRun
    spx_asset: StrategyRun
    ensemble_spx_asset: StrategyRun

    def rows(self) -> list[tuple[str, PerfReport]]:
        b, c = self.base.lower(), self.candidate.lower()
        return [
            (b, self.spx.report),
            (f"{b}_ensemble", self.spx_ensemble.report),
            (f"{b}_{c}", self.spx_asset.report),
            (f"ensemble_{b}_{c}", self.ensemble_spx_asset.report),
        ]

    @property
    def improves_hedge(self) -> bool:
        """True when pairing the ensembles lifts IR** above the base ensemble alone."""
        a, b = self.ensemble_spx_asset.report.IR2, self.spx_ensemble.report.IR2
        return bool(np.isfinite(a) and np.isfinite(b) and a > b)


def pair_diversification(base: Mapping[str, StrategyRun], candidate: Mapping[str, StrategyRun],
                         models: Sequence[str] = TYPE1_MODELS, calendar="quarterly",
                         benchmark: str = "buy_and_hold") -> PairResult:
    """Hedging value of adding ``candidate`` to ``base``.

    Both mappings go from model name to run and must include ``benchmark``
    and every model in ``models``. All four rows are evaluated on the
    timestamps shared by the two benchmark runs.
    """
    for name, runs in (("base", base), ("candidate", candidate)):
        if benchmark not in runs:
            raise MissingComponent(f"{name} lacks the {benchmark} run")
    common = _common_timestamps([base[benchmark].equity, candidate[benchmark].equity])
    lo, hi = common[0], common[-1]
    b = {m: restrict_run(r, lo, hi) for m, r in base.items() if m in (*models, benchmark)}
    c = {m: restrict_run(r, lo, hi) for m, r in candidate.items() if m in (*models, benchmark)}
    b_name, c_name = base[benchmark].asset_id, candidate[benchmark].asset_id

    spx = _ensemble_run(b_name, benchmark, "pair", [b[benchmark]], "rebalanced", "none", common)
    spx_ens = ensemble_type1(b, models, calendar=calendar)
    c_ens = ensemble_type1(c, models, calendar=calendar)
    pair_label = f"{b_name}_{c_name}"
    spx_asset = _ensemble_run(pair_label, benchmark, "pair", [b[benchmark], c[benchmark]], "rebalanced",
                              calendar, common)
    ens_pair = _ensemble_run(pair_label, "ensemble", "pair", [spx_ens, c_ens], "rebalanced", calendar, common)
    return PairResult(b_name, c_name, spx, _on(spx_ens, common), spx_asset, ens_pair)


def _on(run: StrategyRun, timestamps: np.ndarray) -> StrategyRun:
    """Re-express a signal-free run on ``timestamps`` (must be a subset of its own)."""
    if np.array_equal(run.equity.timestamps, timestamps):
        return run
    eq, _ = rebalanced_portfolio([run.equity], calendar="none", timestamps=timestamps)
    return StrategyRun(run.asset_id, run.model, None, eq, performance_report(eq, n_trades=run.report.nTrades),
                       run.config, run.seed)

