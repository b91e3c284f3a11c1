import numpy as np
import pandas as pd
import pytest

from aisforge.data import Frequency, ReturnSeries
from aisforge.metrics import EquityLine
from aisforge.synthetic import make_timestamps


def returns_from_simple(simple, start="2000-01-03", asset_id="X", frequency=Frequency.DAILY) -> ReturnSeries:
    simple = np.asarray(simple, dtype=float)
    ts = make_timestamps(len(simple), frequency, start)
    return ReturnSeries.from_log_returns(asset_id, ts, np.log1p(simple), frequency)


def equity(values, start="2000-01-03", ppy=252) -> EquityLine:
    values = np.asarray(values, dtype=float)
    return EquityLine(pd.bdate_range(start, periods=len(values)).values, values, ppy)


def write_prices(path, prices, start="2020-01-02", freq="B") -> None:
    ts = pd.date_range(start, periods=len(prices), freq=freq)
    pd.DataFrame({"timestamp": ts.strftime("%Y-%m-%d %H:%M:%S"), "close": prices}).to_csv(path, index=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def surrogate_objective(net, X, y, tau):
    from aisforge.lstm import add_l2, forward, forward_backward, madl_surrogate, madl_surrogate_grad

    def value():
        return madl_surrogate(y, forward(net, X), tau) + net.l2_penalty()

    loss, _, grads = forward_backward(net, X, lambda p: madl_surrogate_grad(y, p, tau))
    loss += add_l2(net, grads)
    return value, loss, grads


def gradient_check(net, X, y, tau=1e-3, h=1e-5, floor=1e-9) -> float:
    """Largest relative gap between backprop and central differences over all parameters."""
    value, _, grads = surrogate_objective(net, X, y, tau)
    worst = 0.0
    for name, p in net.params().items():
        g = np.asarray(grads[name])
        flat = p.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = value()
            flat[i] = keep - h
            down = value()
            flat[i] = keep
            num = (up - down) / (2 * h)
            ana = g.reshape(-1)[i]
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
    return worst


def small_backtest_config(**kw):
    from aisforge.arima_garch import RollingConfig
    from aisforge.backtest import BacktestConfig
    from aisforge.lstm import desk_config

    base = dict(first_train=120, test_len=60, lstm=desk_config(epochs=4),
                garch=RollingConfig(pmax=1, qmax=0, criterion="BIC"))
    base.update(kw)
    return BacktestConfig(**base)


def truncation_mismatches(returns, model, config, cut, seed=0) -> int:
    """Positions decided up to ``cut`` that change when the series is cut there."""
    from aisforge.backtest import build_plan, generate_signals

    def signals(rs):
        plan = build_plan(len(rs), config.first_train, config.test_len, config.val_frac)
        return generate_signals(rs, model, plan, config, seed)

    full = signals(returns)
    short = signals(returns.slice(0, cut))
    keep = np.isin(full.timestamps, short.timestamps)
    if keep.sum() != len(short):
        return len(short)
    return int(np.count_nonzero(full.positions[keep] != short.positions))


# acceptance reporting --------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
