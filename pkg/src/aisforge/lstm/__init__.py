"""From-scratch LSTM forecaster trained on a directional loss."""

from .adam import Snapshot, TrainState, adam_step
from .loss import madl, madl_surrogate, madl_surrogate_grad
from .network import (
    LstmLayer,
    LstmNetwork,
    add_l2,
    cell_step,
    forward,
    forward_backward,
    init_network,
    load_snapshot,
    save_snapshot,
)
from .train import (
    LstmConfig,
    PredictionLog,
    desk_config,
    hourly_config,
    make_windows,
    positions_from_output,
    train_window,
    walk_forward_predict,
)

__all__ = [
    "LstmConfig", "LstmLayer", "LstmNetwork", "PredictionLog", "Snapshot", "TrainState",
    "adam_step", "add_l2", "cell_step", "desk_config", "forward", "forward_backward",
    "hourly_config", "init_network", "load_snapshot", "madl", "madl_surrogate",
    "madl_surrogate_grad", "make_windows", "positions_from_output", "save_snapshot",
    "train_window", "walk_forward_predict",
]
