"""Acceptance suite: one test per primary criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(and immediately, when run with ``-s``).
"""

import contextlib
import csv
import textwrap
import time
from pathlib import Path

import numpy as np
import pandas as pd

from aisforge.arima_garch import ArimaGarchSpec, RollingConfig, fit, select_orders
from aisforge.backtest import BacktestConfig, build_plan, run_strategy, signals_to_equity
from aisforge.data import Frequency, ReturnSeries
from aisforge.ensemble import average_equity, rebalanced_portfolio
from aisforge.experiment import compare_frequencies, run_experiment
from aisforge.lstm import desk_config, init_network, madl, madl_surrogate, make_windows, train_window
from aisforge.metrics import annualized_return_compounded, information_ratios, max_drawdown
from aisforge.signals import SignalSeries, contrarian_signal, momentum_signal
from aisforge.synthetic import GeneratorSpec, generate, random_walk_prices

import conftest
from conftest import equity, gradient_check, truncation_mismatches, write_prices

DATA = Path(__file__).parent / "data"


@contextlib.contextmanager
def criterion(name, budget=None):
    """Record one PASS/FAIL line; ``out["ok"]`` and ``out["detail"]`` are set by the body."""
    out = {"ok": False, "detail": ""}
    t0 = time.perf_counter()
    try:
        yield out
    except Exception as exc:
        out["ok"], out["detail"] = False, f"{type(exc).__name__}: {exc}"
        raise
    finally:
        took = time.perf_counter() - t0
        if budget is not None and took > budget:
            out["ok"] = False
            out["detail"] += f" (over budget {budget:g}s)"
        line = f"{'PASS' if out['ok'] else 'FAIL'} | {name} | {out['detail']} | {took:.1f}s"
        conftest.ACCEPTANCE_LINES.append(line)
        print(line)
    assert out["ok"], line


def test_metric_identity():
    with criterion("metric identity on printed rows", budget=1.0) as c:
        worst, n = 0.0, 0
        with open(DATA / "reference_rows.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                arc, asd, md = (float(row[k]) / 100 for k in ("aRC", "aSD", "MD"))
                got = information_ratios(arc, asd, md, float(row["MLD"]))
                want = (float(row["IR1"]), float(row["IR2"]), float(row["IR3"]))
                worst = max(worst, max(abs(g - w) for g, w in zip(got, want)))
                n += 1
        c["ok"] = n == 60 and worst <= 0.01
        c["detail"] = f"{n} rows, max |IR gap| {worst:.4f} (tol 0.01)"


def test_drawdown_oracle():
    with criterion("drawdown oracle on 1000 random walks", budget=10.0) as c:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(2, 501))
            v = np.exp(np.cumsum(np.r_[0.0, rng.normal(0, 0.02, n - 1)]))
            # All pairs i <= j, no running-max shortcut.
            gaps = (v[:, None] - v[None, :]) / v[:, None]
            brute = float(np.max(np.where(np.triu(np.ones((n, n), bool)), gaps, -np.inf)))
            worst = max(worst, abs(max_drawdown(equity(v)) - max(brute, 0.0)))
        c["ok"] = worst <= 1e-12
        c["detail"] = f"max gap {worst:.2e} (tol 1e-12)"


def test_garch_recovery():
    with criterion("GARCH(1,1) recovery and white-noise order selection", budget=120.0) as c:
        g = generate(GeneratorSpec("arma_garch", {"omega": 1e-6, "alpha": 0.10, "beta": 0.85}, length=10_000, seed=11))
        f = fit(g.returns.log_returns, ArimaGarchSpec(0, 0))
        params_ok = f.converged and 0.07 <= f.alpha <= 0.13 and 0.80 <= f.beta <= 0.90
        hits = 0
        for seed in range(20):
            r = np.random.default_rng(seed).normal(0, 0.01, 1000)
            hits += select_orders(r, "BIC") == ArimaGarchSpec(0, 0)
        c["ok"] = params_ok and hits >= 12
        c["detail"] = f"alpha {f.alpha:.4f}, beta {f.beta:.4f}; BIC picks (0,0) in {hits}/20 (need 12)"


def test_lstm_gradient_check():
    with criterion("LSTM gradient check, units 8/4, sequence 10", budget=60.0) as c:
        worst = 0.0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            net = init_network((8, 4), head="linear", l2=1e-6, rng=rng)
            net.input_scale, net.output_scale = 100.0, 0.01
            X, y = rng.normal(0, 0.01, (16, 10)), rng.normal(0, 0.01, 16)
            worst = max(worst, gradient_check(net, X, y, tau=1e-3))
        c["ok"] = worst < 1e-4
        c["detail"] = f"max relative error {worst:.2e} over 5 seeds (tol 1e-4)"


def test_madl_bounds_and_limit():
    with criterion("MADL bounds and surrogate limit") as c:
        rng = np.random.default_rng(7)
        out_of_bounds = 0
        for _ in range(10_000):
            n = int(rng.integers(1, 40))
            R, P = rng.normal(0, 0.02, n), rng.normal(0, 1, n)
            P[rng.random(n) < 0.1] = 0.0
            bound = np.mean(np.abs(R))
            out_of_bounds += not (-bound - 1e-15 <= madl(R, P) <= bound + 1e-15)
        gap = 0.0
        for _ in range(200):
            R = rng.normal(0, 0.01, 50)
            R = np.where(np.abs(R) < 1e-4, 1e-4, R)
            P = np.sign(R) * rng.uniform(0.1, 1.0, 50) * rng.choice([-1, 1])
            gap = max(gap, abs(madl_surrogate(R, P, 1e-6) - madl(R, P)))
        c["ok"] = out_of_bounds == 0 and gap <= 1e-6
        c["detail"] = f"{out_of_bounds} of 10000 batches out of bounds; tau=1e-6 gap {gap:.1e} (tol 1e-6)"


def test_learning_sanity():
    with criterion("LSTM learning sanity on persistent-sign data", budget=600.0) as c:
        cfg = desk_config()
        wins = 0
        for seed in range(10):
            r = generate(GeneratorSpec("sign_persistent", {"phi": 0.9}, length=2000, seed=seed)).returns.log_returns
            net = init_network(cfg.units, head=cfg.head, l2=cfg.l2, rng=np.random.default_rng(seed))
            st = train_window(net, make_windows(r, range(0, 1340), 10), make_windows(r, range(1340, 2000), 10),
                              cfg, seed=seed)
            wins += st.best.val_loss < st.init_val_loss
        rs = generate(GeneratorSpec("sign_persistent", {"phi": 0.9}, length=2000, seed=0)).returns
        run = run_strategy(rs, "lstm", BacktestConfig(lstm=cfg), seed=0)
        rng = np.random.default_rng(0)
        ts = run.signals.timestamps
        random_arc = [
            annualized_return_compounded(signals_to_equity(SignalSeries("X", ts, rng.choice([-1, 1], len(ts))), rs))
            for _ in range(200)
        ]
        p5 = float(np.percentile(random_arc, 5))
        c["ok"] = wins >= 8 and run.report.aRC > p5
        c["detail"] = f"val MADL lowered in {wins}/10 seeds (need 8); aRC {run.report.aRC:.3f} vs random p5 {p5:.3f}"


def test_walk_forward_integrity():
    with criterion("walk-forward plan and look-ahead audit") as c:
        plan = build_plan(1008)
        plan_ok = ([len(s.train) for s in plan.segments] == [252, 504, 756]
                   and [len(s.test) for s in plan.segments] == [252, 252, 252])
        rs = generate(GeneratorSpec("sign_persistent", {"phi": 0.5}, length=420, seed=5)).returns
        cfg = BacktestConfig(first_train=150, test_len=100, lstm=desk_config(epochs=8),
                             garch=RollingConfig(criterion="BIC", pmax=1, qmax=1))
        bad = {}
        for model in ("contrarian", "momentum", "arima_garch", "lstm"):
            bad[model] = sum(truncation_mismatches(rs, model, cfg, cut) for cut in (180, 263, 377))
        c["ok"] = plan_ok and not any(bad.values())
        c["detail"] = f"plan 252/504/756 x 252: {plan_ok}; changed positions after truncation {bad}"


def test_ensemble_algebra():
    with criterion("ensemble algebra") as c:
        rng = np.random.default_rng(8)
        v = np.exp(np.cumsum(np.r_[0.0, rng.normal(0, 0.01, 399)]))
        ln = equity(v)
        identity_gap = float(np.max(np.abs(average_equity([ln] * 4).values - v)))
        R = rng.normal(0, 0.02, (4, 300))
        lines = [equity(np.r_[1.0, np.cumprod(1 + r)]) for r in R]
        w = np.array([0.4, 0.3, 0.2, 0.1])
        port, _ = rebalanced_portfolio(lines, w, calendar=lines[0].timestamps)
        ret_gap = float(np.max(np.abs(port.values[1:] / port.values[:-1] - 1 - w @ R)))
        perm_gap = 0.0
        for s in range(100):
            g = np.random.default_rng(1000 + s)
            k = int(g.integers(2, 7))
            comps = [equity(np.exp(np.cumsum(np.r_[0.0, g.normal(0, 0.01, 199)]))) for _ in range(k)]
            order = g.permutation(k)
            a, _ = rebalanced_portfolio(comps)
            b, _ = rebalanced_portfolio([comps[i] for i in order])
            m1, m2 = average_equity(comps), average_equity([comps[i] for i in order])
            perm_gap = max(perm_gap, float(np.max(np.abs(a.values - b.values))),
                           float(np.max(np.abs(m1.values - m2.values))))
        c["ok"] = identity_gap <= 1e-12 and ret_gap <= 1e-12 and perm_gap <= 1e-12
        c["detail"] = f"identity {identity_gap:.1e}, per-period mean {ret_gap:.1e}, permutation {perm_gap:.1e}"


def test_signal_complementarity():
    with criterion("momentum = -contrarian; buy-and-hold trades = 2") as c:
        rng = np.random.default_rng(9)
        mismatches = 0
        for _ in range(1000):
            n = int(rng.integers(1, 300))
            r = rng.normal(0, 0.01, n)
            r[rng.random(n) < 0.05] = 0.0
            ts = pd.bdate_range("2001-01-02", periods=n).values
            rs = ReturnSeries.from_log_returns("X", ts, r)
            mismatches += int(np.count_nonzero(momentum_signal(rs).positions != -contrarian_signal(rs).positions))
        trades = set()
        for s in range(20):
            n = int(rng.integers(2, 600))
            rs = generate(GeneratorSpec("gaussian_iid", length=n + 1, seed=s)).returns
            trades.add(run_strategy(rs, "buy_and_hold", BacktestConfig(first_train=max(1, n // 3))).report.nTrades)
        c["ok"] = mismatches == 0 and trades == {2}
        c["detail"] = f"{mismatches} mismatched positions over 1000 series; B&H trade counts {sorted(trades)}"


def test_end_to_end_determinism(tmp_path):
    with criterion("end-to-end determinism") as c:
        (tmp_path / "data").mkdir()
        for i, a in enumerate(("A", "B")):
            write_prices(tmp_path / "data" / f"{a}.csv", random_walk_prices(420, seed=40 + i))
        cfg = tmp_path / "exp.yaml"
        cfg.write_text(textwrap.dedent("""\
            version: 1
            output_dir: out
            seeds: [0, 1]
            models: [contrarian, momentum, arima_garch, lstm, bh]
            walk_forward: {first_train: 150, test_len: 150}
            lstm: {preset: desk, epochs: 10}
            arima_garch: {criterion: BIC, pmax: 1, qmax: 0}
            assets:
              A: {path: data/A.csv}
              B: {path: data/B.csv}
            """), encoding="utf-8")
        a = run_experiment(cfg, out=tmp_path / "first")
        b = run_experiment(cfg, out=tmp_path / "second")
        same = all((tmp_path / "first" / f).read_bytes() == (tmp_path / "second" / f).read_bytes()
                   for f in ("summary.csv", "ensembles.csv", "diversification.csv"))
        c["ok"] = a.status == b.status == 0 and same
        c["detail"] = f"exit codes {a.status}/{b.status}; summary, ensembles, diversification identical: {same}"


def test_frequency_comparison():
    with criterion("frequency comparison direction") as c:
        per_day = 7
        hourly = generate(GeneratorSpec("sign_persistent", {"phi": 0.9, "sigma": 0.003}, length=600 * per_day,
                                        seed=0, frequency="hourly", start="2015-01-02 09:00")).returns
        noise = np.random.default_rng(1).normal(0, 0.03, 600)
        daily_r = hourly.log_returns.reshape(-1, per_day).sum(axis=1) + noise
        daily = ReturnSeries.from_log_returns("X", pd.bdate_range("2015-01-02", periods=600).values, daily_r,
                                              Frequency.DAILY)
        lstm = desk_config()
        rows = dict(compare_frequencies(
            daily, hourly,
            BacktestConfig(first_train=200, test_len=200, lstm=lstm),
            BacktestConfig(first_train=1400, test_len=1400, periods_per_year=252 * per_day, lstm=lstm),
        ))
        ir_d, ir_h = rows["lstm_1d"].report.IR1, rows["lstm_1h"].report.IR1
        c["ok"] = bool(ir_h > ir_d)
        c["detail"] = f"IR* 1h {ir_h:.2f} vs 1d {ir_d:.2f}"
