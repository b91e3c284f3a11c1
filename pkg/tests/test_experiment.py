import csv
import textwrap

import numpy as np
import pandas as pd
import pytest

from aisforge.backtest import BacktestConfig, load_run
from aisforge.config import load_config
from aisforge.data import Frequency, ReturnSeries
from aisforge.errors import ConfigError, UnknownRunId
from aisforge.experiment import (
    EXIT_OK,
    EXIT_PARTIAL,
    EXIT_VALIDATION,
    SUMMARY_HEADER,
    compare_frequencies,
    emit_plot_data,
    read_wide_csv,
    run_experiment,
    run_frequency_comparison,
    write_comparison_csv,
    write_wide_csv,
)
from aisforge.synthetic import random_walk_prices

from conftest import equity, write_prices


def _project(tmp_path, body, assets=("A",), n=400):
    data = tmp_path / "data"
    data.mkdir(exist_ok=True)
    for i, a in enumerate(assets):
        write_prices(data / f"{a}.csv", random_walk_prices(n, seed=i + 1))
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(textwrap.dedent(body), encoding="utf-8")
    return cfg


BASIC = """\
    version: 1
    output_dir: out
    seeds: [0]
    models: [contrarian, momentum, bh]
    walk_forward: {first_train: 120, test_len: 120}
    assets:
      A: {path: data/A.csv}
    """


# --- config -------------------------------------------------------------------

def test_load_basic(tmp_path):
    cfg = load_config(_project(tmp_path, BASIC))
    assert cfg.models == ("contrarian", "momentum", "buy_and_hold")
    assert cfg.output_dir == tmp_path / "out"
    bt = cfg.backtest_config("A")
    assert bt.first_train == 120 and bt.test_len == 120


def test_missing_csv_names_asset(tmp_path):
    path = _project(tmp_path, BASIC)
    (tmp_path / "data" / "A.csv").unlink()
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert "asset A" in str(exc.value)
    assert exc.value.line == 7


def test_unknown_key_reports_line(tmp_path):
    body = BASIC.replace("    walk_forward: {first_train: 120, test_len: 120}\n",
                         "    walk_forward:\n      first_train: 120\n      test_lenn: 120\n")
    with pytest.raises(ConfigError) as exc:
        load_config(_project(tmp_path, body))
    assert "test_lenn" in str(exc.value) and exc.value.line == 7


@pytest.mark.parametrize("bad", [
    "models: [contrarian, oracle]",
    "seeds: []",
    "version: 2",
    "lstm: {preset: huge}",
    "arima_garch: {criterion: XIC}",
    "ensembles: {calendar: weekly}",
])
def test_invalid_values(tmp_path, bad):
    key = bad.split(":")[0]
    lines = [ln for ln in BASIC.splitlines() if not ln.strip().startswith(key + ":")]
    body = "\n".join(lines) + f"\n    {bad}\n"
    with pytest.raises(ConfigError):
        load_config(_project(tmp_path, body))


def test_lstm_precedence(tmp_path):
    body = BASIC.replace("    assets:", "    lstm: {preset: desk, epochs: 7, head: linear}\n    assets:")
    body = body.replace("A: {path: data/A.csv}", "A: {path: data/A.csv, lstm_head: inverted_relu, lstm: {lr: 0.02}}")
    cfg = load_config(_project(tmp_path, body))
    lc = cfg.backtest_config("A").lstm
    assert (lc.units, lc.epochs, lc.head, lc.lr, lc.standardize) == ((8, 4), 7, "inverted_relu", 0.02, True)


def test_scientific_notation_parsed_as_number(tmp_path):
    cfg = load_config(_project(tmp_path, BASIC.replace("    assets:", "    lstm: {preset: desk, l2: 1e-6}\n    assets:")))
    assert cfg.backtest_config("A").lstm.l2 == 1e-6


def test_overrides(tmp_path):
    cfg = load_config(_project(tmp_path, BASIC)).with_overrides(out=tmp_path / "o2", seed=5, models=["bh"])
    assert cfg.seeds == (5,) and cfg.models == ("buy_and_hold",) and cfg.output_dir == tmp_path / "o2"
    with pytest.raises(ConfigError):
        cfg.with_overrides(assets=["nope"])


# --- experiment ---------------------------------------------------------------

def test_three_models_three_rows(tmp_path):
    res = run_experiment(_project(tmp_path, BASIC))
    assert res.status == EXIT_OK
    rows = list(csv.reader(open(tmp_path / "out" / "summary.csv")))
    assert tuple(rows[0]) == SUMMARY_HEADER
    assert [r[1] for r in rows[1:]] == ["contrarian", "momentum", "buy_and_hold"]
    bh = rows[3]
    assert bh[SUMMARY_HEADER.index("nTrades")] == "2"
    assert bh[SUMMARY_HEADER.index("nObs")] == str(399 - 120 + 1)


def test_rerun_is_byte_identical(tmp_path):
    path = _project(tmp_path, BASIC, assets=("A", "B"))
    run_experiment(path, out=tmp_path / "r1")
    run_experiment(path, out=tmp_path / "r2")
    for name in ("summary.csv", "ensembles.csv", "diversification.csv", "figures/A__s0.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_parallel_matches_serial(tmp_path):
    path = _project(tmp_path, BASIC, assets=("A", "B"))
    run_experiment(path, out=tmp_path / "j1", jobs=1)
    run_experiment(path, out=tmp_path / "j2", jobs=2)
    assert (tmp_path / "j1" / "summary.csv").read_bytes() == (tmp_path / "j2" / "summary.csv").read_bytes()


def test_broken_asset_is_isolated(tmp_path):
    path = _project(tmp_path, BASIC.replace("A: {path: data/A.csv}", "A: {path: data/A.csv}\n      B: {path: data/B.csv}"),
                    assets=("A", "B"))
    (tmp_path / "data" / "B.csv").write_text("timestamp,close\n2020-01-03,1\n2020-01-02,2\n")
    res = run_experiment(path)
    assert res.status == EXIT_PARTIAL
    rows = list(csv.DictReader(open(tmp_path / "out" / "summary.csv")))
    assert {r["asset"] for r in rows} == {"A"} and len(rows) == 3
    fails = list(csv.DictReader(open(tmp_path / "out" / "failures.csv")))
    assert {f["asset"] for f in fails} == {"B"} and "NonMonotonicTimestamps" in fails[0]["error"]


def test_invalid_config_exit_code(tmp_path):
    path = _project(tmp_path, BASIC)
    (tmp_path / "data" / "A.csv").unlink()
    assert run_experiment(path).status == EXIT_VALIDATION


FULL = """\
    version: 1
    output_dir: out
    seeds: [0, 1]
    models: [contrarian, momentum, arima_garch, lstm, bh]
    walk_forward: {first_train: 150, test_len: 150}
    lstm: {preset: desk, epochs: 3}
    arima_garch: {criterion: BIC, pmax: 0, qmax: 0}
    ensembles: {type1: true, type2: true, pairs: true, base_asset: A}
    figures:
      fig_a: [A__buy_and_hold__s0, A__lstm__s1, A__ensemble__s0]
    assets:
      A: {path: data/A.csv}
      B: {path: data/B.csv}
    """


@pytest.mark.slow
def test_full_matrix(tmp_path):
    res = run_experiment(_project(tmp_path, FULL, assets=("A", "B"), n=350))
    assert res.status == EXIT_OK, res.failures
    summary = pd.read_csv(tmp_path / "out" / "summary.csv")
    assert len(summary) == 2 * 5 * 2
    # Seed-free models are shared across seeds; the LSTM is not.
    a = summary[summary.asset == "A"].set_index(["model", "seed"])
    assert a.loc[("momentum", 0), "aRC"] == a.loc[("momentum", 1), "aRC"]
    ens = pd.read_csv(tmp_path / "out" / "ensembles.csv")
    assert {"ensemble", "lstm_all", "ensemble_all"} <= set(ens.model)
    div = pd.read_csv(tmp_path / "out" / "diversification.csv")
    assert list(div[div.seed == 0]["row"]) == ["a", "a_ensemble", "a_b", "ensemble_a_b"]
    fig = read_wide_csv(tmp_path / "out" / "figures" / "fig_a.csv")
    assert list(fig) == ["A__buy_and_hold__s0", "A__lstm__s1", "A__ensemble__s0"]
    stored = load_run(tmp_path / "out" / "runs" / "A__lstm__s1").equity
    np.testing.assert_array_equal(fig["A__lstm__s1"].to_numpy(), stored.values)


# --- plot data ----------------------------------------------------------------

def test_wide_csv_single_run(tmp_path):
    ln = equity([1.0, 1.1, 1.05])
    write_wide_csv({"r": ln}, tmp_path / "w.csv")
    df = pd.read_csv(tmp_path / "w.csv")
    assert list(df.columns) == ["timestamp", "r"] and len(df) == 3


def test_wide_csv_union_and_round_trip(tmp_path, rng):
    lines = {}
    for i, freq in enumerate(["B", "B", "D", "W-FRI", "B"]):
        n = int(rng.integers(20, 60))
        ts = pd.date_range(f"2020-0{i + 1}-01", periods=n, freq=freq).values
        v = np.exp(np.cumsum(np.r_[0.0, rng.normal(0, 0.01, n - 1)]))
        lines[f"run{i}"] = equity(v).__class__(ts, v, 252)
    write_wide_csv(lines, tmp_path / "w.csv")
    raw = pd.read_csv(tmp_path / "w.csv", dtype=str, keep_default_na=False)
    union = np.unique(np.concatenate([ln.timestamps for ln in lines.values()]))
    assert len(raw) == len(union)
    assert (raw.iloc[:, 1:] == "").to_numpy().any()
    back = read_wide_csv(tmp_path / "w.csv")
    for k, ln in lines.items():
        np.testing.assert_array_equal(back[k].to_numpy(), ln.values)
        np.testing.assert_array_equal(back[k].index.values, ln.timestamps)


def test_plot_data_unknown_run(tmp_path):
    run_experiment(_project(tmp_path, BASIC))
    with pytest.raises(UnknownRunId):
        emit_plot_data(tmp_path / "out", {"f": ["A__momentum__s0", "A__nothing__s0"]})
    paths = emit_plot_data(tmp_path / "out", {"f": ["A__momentum__s0"]}, tmp_path / "figs")
    assert paths == [tmp_path / "figs" / "f.csv"]


# --- frequency comparison -----------------------------------------------------

def _rs(log_r, freq, start="2018-01-02 09:00"):
    if freq is Frequency.DAILY:
        ts = pd.bdate_range(start[:10], periods=len(log_r)).values
    else:
        ts = pd.date_range(start, periods=len(log_r), freq="h").values
    return ReturnSeries.from_log_returns("X", ts, log_r, freq)


def test_identical_data_identical_rows(tmp_path, rng):
    r = rng.normal(0, 0.01, 400)
    cfg = BacktestConfig(first_train=150, test_len=150)
    rows = compare_frequencies(_rs(r, Frequency.DAILY), _rs(r, Frequency.DAILY), cfg, cfg, model="momentum")
    assert [lbl for lbl, _ in rows] == ["momentum_1d", "momentum_1h"]
    assert rows[0][1].report.to_dict() == rows[1][1].report.to_dict()
    write_comparison_csv(tmp_path / "c.csv", "X", rows)
    df = pd.read_csv(tmp_path / "c.csv")
    assert tuple(df.columns) == SUMMARY_HEADER and len(df) == 2


def test_compare_freq_from_config(tmp_path):
    body = """\
        version: 1
        output_dir: out
        models: [momentum]
        walk_forward: {first_train: 120, test_len: 120}
        assets:
          D: {path: data/D.csv}
          H: {path: data/H.csv, frequency: hourly, periods_per_year: 1764}
        frequency_pairs:
          X: {daily: D, hourly: H}
        """
    path = _project(tmp_path, body, assets=("D",))
    p = random_walk_prices(400, seed=9)
    pd.DataFrame({"timestamp": pd.date_range("2020-01-02", periods=400, freq="h").strftime("%Y-%m-%d %H:%M:%S"),
                  "close": p}).to_csv(tmp_path / "data" / "H.csv", index=False)
    res = run_frequency_comparison(path, model="momentum")
    assert res.status == EXIT_OK
    df = pd.read_csv(tmp_path / "out" / "frequency_comparison.csv")
    assert list(df.model) == ["momentum_1d", "momentum_1h"]
