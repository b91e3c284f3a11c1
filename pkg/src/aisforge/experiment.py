"""Config-driven experiment runs: strategy matrix, ensembles, tables and plot data.

Output layout under the configured directory::

    runs/<asset>__<model>__s<seed>/   one directory per strategy or ensemble run
    summary.csv                       asset x model rows with the nine metrics
    ensembles.csv                     type-I and type-II ensemble rows
    diversification.csv               hedging rows for each base/candidate pair
    failures.csv                      runs that raised, with the error
    figures/<asset>__s<seed>.csv      equity lines per asset, wide format
"""

from __future__ import annotations

import csv
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .backtest import BacktestConfig, StrategyRun, load_run, run_strategy, save_run
from .config import ExperimentConfig, load_config
from .data import ReturnSeries, compute_returns, load_price_csv
from .ensemble import TYPE1_MODELS, ensemble_type1, ensemble_type2, pair_diversification
from .errors import AisForgeError, ConfigError, UnknownRunId
from .metrics import REPORT_FIELDS, EquityLine, PerfReport

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_PARTIAL = 0, 1, 2
SEED_FREE = ("buy_and_hold", "contrarian", "momentum", "arima_garch")
SUMMARY_HEADER = ("asset", "model", "seed") + REPORT_FIELDS


@dataclass
class Failure:
    asset: str
    model: str
    seed: int | str
    error: str


@dataclass
class ExperimentResult:
    status: int
    output_dir: Path
    runs: dict = field(default_factory=dict)
    ensembles: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    failures: list[Failure] = field(default_factory=list)


def run_dirname(run: StrategyRun, seed: int) -> str:
    return f"{run.run_id}__s{seed}"


def write_summary_csv(path: str | Path, rows: Iterable[tuple[str, str, object, PerfReport]]) -> None:
    """Rows of (asset, model, seed, report) under :data:`SUMMARY_HEADER`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for asset, model, seed, rep in rows:
            w.writerow([asset, model, seed, *rep.csv_values()])


def write_wide_csv(lines: Mapping[str, EquityLine], path: str | Path) -> None:
    """Equity lines side by side on the union of their timestamps; blank where absent."""
    if not lines:
        raise ValueError("no equity lines to write")
    stamps = np.unique(np.concatenate([ln.timestamps for ln in lines.values()]))
    cols = []
    for ln in lines.values():
        col = np.full(len(stamps), None, dtype=object)
        col[np.searchsorted(stamps, ln.timestamps)] = [repr(float(v)) for v in ln.values]
        cols.append(col)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *lines.keys()])
        for i, t in enumerate(stamps):
            w.writerow([pd.Timestamp(t).isoformat(), *("" if c[i] is None else c[i] for c in cols)])


def read_wide_csv(path: str | Path) -> dict[str, pd.Series]:
    """Inverse of :func:`write_wide_csv`; each column drops its blank rows."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    ts = pd.to_datetime(df["timestamp"], format="ISO8601")
    out = {}
    for name in df.columns[1:]:
        mask = df[name] != ""
        out[name] = pd.Series(df.loc[mask, name].astype(float).to_numpy(), index=ts[mask].to_numpy())
    return out


def emit_plot_data(out_dir: str | Path, figures: Mapping[str, Sequence[str]], dest: str | Path | None = None) -> list[Path]:
    """One wide CSV per figure from stored run directories.

    Args:
        out_dir: experiment output directory holding ``runs/``.
        figures: figure name -> run directory names (``<asset>__<model>__s<seed>``).
        dest: where to write; defaults to ``out_dir/figures``.

    Raises:
        UnknownRunId: a named run has no stored directory.
    """
    out_dir = Path(out_dir)
    dest = Path(dest) if dest is not None else out_dir / "figures"
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    for name, ids in figures.items():
        lines = {}
        for rid in ids:
            d = out_dir / "runs" / rid
            if not (d / "equity.csv").is_file():
                raise UnknownRunId(rid)
            lines[rid] = load_run(d).equity
        path = dest / f"{name}.csv"
        write_wide_csv(lines, path)
        written.append(path)
    return written


def load_asset(cfg: ExperimentConfig, asset_id: str) -> ReturnSeries:
    a = cfg.assets[asset_id]
    prices = load_price_csv(a.path, a.schema, asset_id=asset_id, frequency=a.frequency)
    return compute_returns(prices)


def _execute(task) -> tuple[str, object]:
    returns, model, bt, seed = task
    try:
        return "ok", run_strategy(returns, model, bt, seed)
    except Exception as exc:  # isolate: one failing run never aborts siblings
        logger.debug("%s/%s failed:\n%s", returns.asset_id, model, traceback.format_exc())
        return "err", f"{type(exc).__name__}: {exc}"


def _map(tasks: list, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_execute, tasks))
    return [_execute(t) for t in tasks]


def run_experiment(config: str | Path | ExperimentConfig, jobs: int = 1, **overrides) -> ExperimentResult:
    """Run every configured asset/model pair, then the ensembles, and write the tables.

    Returns an :class:`ExperimentResult` whose ``status`` is 0 on success,
    1 when the config is invalid and 2 when some runs failed.
    """
    try:
        cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
        cfg = cfg.with_overrides(**overrides)
    except ConfigError as exc:
        logger.error("invalid config: %s", exc)
        return ExperimentResult(EXIT_VALIDATION, Path("."))
    out = Path(cfg.output_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    result = ExperimentResult(EXIT_OK, out)

    series: dict[str, ReturnSeries] = {}
    for aid in cfg.assets:
        try:
            series[aid] = load_asset(cfg, aid)
        except (AisForgeError, OSError, ValueError) as exc:
            for m in cfg.models:
                for s in cfg.seeds:
                    result.failures.append(Failure(aid, m, s, f"{type(exc).__name__}: {exc}"))

    # Seed-free models run once and are shared by every seed.
    keys, tasks = [], []
    for aid, rs in series.items():
        bt = cfg.backtest_config(aid)
        for m in cfg.models:
            seeds = cfg.seeds[:1] if m in SEED_FREE else cfg.seeds
            for s in seeds:
                keys.append((aid, m, s))
                tasks.append((rs, m, bt, s))
    outcomes = dict(zip(keys, _map(tasks, jobs)))

    summary_rows = []
    for aid in series:
        for m in cfg.models:
            for s in cfg.seeds:
                kind, val = outcomes[(aid, m, cfg.seeds[0] if m in SEED_FREE else s)]
                if kind == "err":
                    result.failures.append(Failure(aid, m, s, val))
                    continue
                run = val
                result.runs[(aid, m, s)] = run
                save_run(run, out / "runs" / run_dirname(run, s))
                summary_rows.append((aid, m, s, run.report))
    write_summary_csv(out / "summary.csv", summary_rows)

    ens_rows, pair_rows = [], []
    for s in cfg.seeds:
        _ensembles(cfg, series, result, s, ens_rows, pair_rows)
    write_summary_csv(out / "ensembles.csv", ens_rows)
    _write_pairs(out / "diversification.csv", pair_rows)
    _write_figures(cfg, result, series, out / "figures")
    if cfg.figures:
        try:
            emit_plot_data(out, cfg.figures)
        except UnknownRunId as exc:
            result.failures.append(Failure("", "figures", "", f"UnknownRunId: {exc}"))
    _write_failures(out / "failures.csv", result.failures)
    if result.failures:
        result.status = EXIT_PARTIAL
    return result


def _daily_assets(cfg: ExperimentConfig, series) -> list[str]:
    return [a for a in series if cfg.assets[a].frequency.value == "daily"]


def _ensembles(cfg, series, result: ExperimentResult, seed: int, ens_rows: list, pair_rows: list) -> None:
    flags = cfg.ensembles
    out = result.output_dir / "runs"
    runs = {a: {m: r for (aa, m, s), r in result.runs.items() if aa == a and s == seed} for a in series}

    def attempt(label, fn):
        try:
            return fn()
        except Exception as exc:
            result.failures.append(Failure(label[0], label[1], seed, f"{type(exc).__name__}: {exc}"))
            return None

    type1 = {}
    if flags.type1:
        for a in series:
            if all(m in runs[a] for m in TYPE1_MODELS):
                e = attempt((a, "ensemble"), lambda: ensemble_type1(runs[a], method=flags.method,
                                                                     calendar=flags.calendar))
                if e is not None:
                    type1[a] = e
                    result.ensembles.append((seed, e))
                    save_run(e, out / run_dirname(e, seed))
                    ens_rows.append((a, e.model, seed, e.report))

    daily = _daily_assets(cfg, series)
    if flags.type2 and len(daily) >= 2:
        per_model = {m: {a: runs[a][m] for a in daily if m in runs[a]} for m in cfg.models}
        per_model["ensemble"] = {a: type1[a] for a in daily if a in type1}
        for m, comp in per_model.items():
            if len(comp) < 2:
                continue
            e = attempt(("ALL", f"{m}_all"), lambda: ensemble_type2(m, comp, method=flags.method,
                                                                     calendar=flags.calendar))
            if e is not None:
                result.ensembles.append((seed, e))
                save_run(e, out / run_dirname(e, seed))
                ens_rows.append((e.asset_id, e.model, seed, e.report))

    if flags.pairs and len(daily) >= 2:
        base = flags.base_asset or daily[0]
        need = (*TYPE1_MODELS, "buy_and_hold")
        if base in runs and all(m in runs[base] for m in need):
            for c in daily:
                if c == base or not all(m in runs[c] for m in need):
                    continue
                res = attempt((f"{base}_{c}", "pair"),
                              lambda: pair_diversification(runs[base], runs[c], calendar=flags.calendar))
                if res is None:
                    continue
                result.pairs.append((seed, res))
                for label, rep in res.rows():
                    pair_rows.append((seed, base, c, label, rep, res.improves_hedge))


def _write_pairs(path: Path, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "base", "candidate", "row", *REPORT_FIELDS, "improves_hedge"])
        for seed, base, cand, label, rep, verdict in rows:
            w.writerow([seed, base, cand, label, *rep.csv_values(), str(verdict).lower()])


def _write_failures(path: Path, failures: list[Failure]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["asset", "model", "seed", "error"])
        for f in failures:
            w.writerow([f.asset, f.model, f.seed, f.error])


def _write_figures(cfg, result: ExperimentResult, series, dest: Path) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    ens = {(e.asset_id, s): e for s, e in result.ensembles if e.model == "ensemble"}
    for s in cfg.seeds:
        for a in series:
            lines = {m: r.equity for (aa, m, ss), r in result.runs.items() if aa == a and ss == s}
            if (a, s) in ens:
                lines["ensemble"] = ens[(a, s)].equity
            if lines:
                write_wide_csv(lines, dest / f"{a}__s{s}.csv")


# frequency comparison -------------------------------------------------------

def compare_frequencies(daily: ReturnSeries, hourly: ReturnSeries, daily_config: BacktestConfig,
                        hourly_config: BacktestConfig, model: str = "lstm",
                        seed: int = 0) -> list[tuple[str, StrategyRun]]:
    """The same model on a daily and an hourly series, labelled ``<model>_1d`` and ``<model>_1h``."""
    return [
        (f"{model}_1d", run_strategy(daily, model, daily_config, seed)),
        (f"{model}_1h", run_strategy(hourly, model, hourly_config, seed)),
    ]


def write_comparison_csv(path: str | Path, asset: str, rows: list[tuple[str, StrategyRun]], seed: int = 0) -> None:
    """Comparison rows in the summary CSV schema."""
    write_summary_csv(path, [(asset, label, seed, run.report) for label, run in rows])


def run_frequency_comparison(config: str | Path | ExperimentConfig, model: str = "lstm", **overrides) -> ExperimentResult:
    """Every ``frequency_pairs`` entry of the config into ``frequency_comparison.csv``."""
    try:
        cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
        cfg = cfg.with_overrides(**{k: v for k, v in overrides.items() if k != "assets"})
    except ConfigError as exc:
        logger.error("invalid config: %s", exc)
        return ExperimentResult(EXIT_VALIDATION, Path("."))
    if not cfg.frequency_pairs:
        logger.error("config defines no frequency_pairs")
        return ExperimentResult(EXIT_VALIDATION, cfg.output_dir)
    wanted = overrides.get("assets")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = ExperimentResult(EXIT_OK, out)
    rows = []
    for name, pair in cfg.frequency_pairs.items():
        if wanted and name not in wanted:
            continue
        for s in cfg.seeds:
            try:
                d, h = load_asset(cfg, pair["daily"]), load_asset(cfg, pair["hourly"])
                res = compare_frequencies(d, h, cfg.backtest_config(pair["daily"]),
                                          cfg.backtest_config(pair["hourly"]), model, s)
            except Exception as exc:
                result.failures.append(Failure(name, model, s, f"{type(exc).__name__}: {exc}"))
                continue
            for label, run in res:
                rows.append((name, label, s, run.report))
                save_run(run, out / "runs" / f"{name}__{label}__s{s}")
    write_summary_csv(out / "frequency_comparison.csv", rows)
    if result.failures:
        _write_failures(out / "failures.csv", result.failures)
        result.status = EXIT_PARTIAL
    return result
