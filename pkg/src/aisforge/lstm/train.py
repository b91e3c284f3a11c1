"""Full-batch training with validation checkpointing, and walk-forward prediction."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from ..data import ReturnSeries
from ..errors import DegenerateWindow, WindowTooSmall
from ..signals import SignalSeries
from .adam import Snapshot, TrainState, adam_step
from .loss import DEFAULT_TAU, madl, madl_surrogate_grad
from .network import LstmNetwork, add_l2, forward, forward_backward, init_network

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LstmConfig:
    """Hyperparameters; defaults are the tuned full-size values."""

    units: tuple[int, ...] = (512, 256, 128)
    seq_len: int = 10
    l2: float = 1e-6
    dropout: float = 0.0
    lr: float = 0.5
    epochs: int = 300
    head: str = "relu"
    tau: float = DEFAULT_TAU
    literal_eq9: bool = False
    # Scale inputs and outputs by the training window's return std.
    standardize: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["units"] = list(self.units)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LstmConfig":
        d = dict(d)
        if "units" in d:
            d["units"] = tuple(int(u) for u in d["units"])
        return cls(**d)


def desk_config(**overrides) -> LstmConfig:
    """Small network that trains in seconds on a CPU.

    Inputs are standardised: with raw returns the head output dwarfs the
    surrogate temperature and its gradient vanishes on a net this small.
    """
    base = LstmConfig(units=(8, 4), lr=0.01, epochs=60, standardize=True)
    return replace(base, **overrides)


def hourly_config(base: LstmConfig | None = None) -> LstmConfig:
    """Adds a 252-unit fourth layer and trains for 120 epochs."""
    base = base or LstmConfig()
    return replace(base, units=tuple(base.units) + (252,), epochs=120)


def make_windows(returns: np.ndarray, targets: range | np.ndarray, seq_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Input sequences ``returns[j - seq_len:j]`` and targets ``returns[j]``.
    Targets without a full history are dropped."""
    r = np.asarray(returns, dtype=float)
    idx = np.asarray([j for j in targets if j >= seq_len], dtype=int)
    if idx.size == 0:
        return np.empty((0, seq_len)), np.empty(0)
    X = np.stack([r[j - seq_len:j] for j in idx])
    return X, r[idx]


def network_for(config: LstmConfig, rng: np.random.Generator) -> LstmNetwork:
    return init_network(config.units, 1, config.head, config.l2, config.dropout, config.literal_eq9, rng)


def train_window(net: LstmNetwork, train: tuple[np.ndarray, np.ndarray], val: tuple[np.ndarray, np.ndarray],
                 config: LstmConfig, seed: int = 0) -> TrainState:
    """Train ``net`` in place and leave it holding the best-validation weights.

    Each epoch is one full-batch Adam step on the surrogate loss plus L2;
    exact MADL on ``val`` decides which epoch's parameters are kept.
    """
    Xtr, ytr = train
    Xva, yva = val
    if len(ytr) < 2 or len(yva) < 1:
        raise WindowTooSmall(f"{len(ytr)} training and {len(yva)} validation samples")
    if np.std(ytr) == 0:
        raise DegenerateWindow("training targets have zero variance")
    if config.standardize:
        net.input_scale = 1.0 / float(np.std(Xtr)) if np.std(Xtr) > 0 else 1.0
        net.output_scale = float(np.std(ytr))
    rng = np.random.default_rng(seed)
    state = TrainState(lr=config.lr, seed=seed)
    state.init_val_loss = madl(yva, forward(net, Xva))
    params = net.params()

    def loss_fn(pred):
        return madl_surrogate_grad(ytr, pred, config.tau)

    for epoch in range(1, config.epochs + 1):
        loss, _, grads = forward_backward(net, Xtr, loss_fn, rng=rng, training=True)
        loss += add_l2(net, grads)
        adam_step(state, params, grads)
        val_loss = madl(yva, forward(net, Xva))
        state.history.append((epoch, float(loss), val_loss))
        if state.best is None or val_loss < state.best.val_loss:
            state.best = Snapshot(net.get_params(), epoch, val_loss)
    net.set_params(state.best.params)
    return state


def positions_from_output(out: np.ndarray, head: str) -> np.ndarray:
    if head == "relu":
        return np.where(out > 0, 1, 0)
    if head == "inverted_relu":
        return np.where(out < 0, -1, 0)
    return np.sign(out).astype(int)


@dataclass
class PredictionLog:
    timestamps: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "raw_output", "position"])
            for t, o, p in zip(self.timestamps, self.outputs, self.positions):
                w.writerow([pd.Timestamp(t).isoformat(), repr(float(o)), int(p)])


def walk_forward_predict(returns: ReturnSeries, plan, config: LstmConfig, seed: int = 0,
                         log: PredictionLog | None = None) -> SignalSeries:
    """Retrain per plan segment and forecast each of its test returns.

    The position stamped at return ``j - 1`` comes from the forecast of
    return ``j`` made from the ``seq_len`` returns before it. Segment ``k``
    gets its own generator seeded with ``(seed, k)``.
    """
    r = returns.log_returns
    ts = returns.timestamps
    L = config.seq_len
    out_ts, out_pos, out_fc = [], [], []
    for k, seg in enumerate(plan.segments):
        fit_targets = range(seg.train.start, seg.val.start)
        train = make_windows(r, fit_targets, L)
        val = make_windows(r, seg.val, L)
        rng = np.random.default_rng([seed, k])
        net = network_for(config, rng)
        state = train_window(net, train, val, config, seed=int(rng.integers(2**31)))
        Xte, _ = make_windows(r, seg.test, L)
        if len(Xte) != len(seg.test):
            raise WindowTooSmall(f"segment {k}: test targets need {L} prior returns")
        pred = forward(net, Xte)
        pos = positions_from_output(pred, config.head)
        dec = ts[np.asarray(seg.test) - 1]
        out_ts.extend(dec)
        out_pos.extend(pos)
        out_fc.extend(pred)
        if log is not None:
            log.timestamps.extend(dec)
            log.outputs.extend(pred)
            log.positions.extend(pos)
            log.segments.extend([k] * len(pred))
            log.states.append(state)
        logger.debug("segment %d: best epoch %d val MADL %.6g", k, state.best.epoch, state.best.val_loss)
    return SignalSeries(returns.asset_id, np.asarray(out_ts, dtype="datetime64[ns]"), out_pos, out_fc)
