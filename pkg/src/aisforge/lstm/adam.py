"""Adam with bias-corrected moment estimates, operating on named arrays in place."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class Snapshot:
    params: dict[str, np.ndarray]
    epoch: int
    val_loss: float


@dataclass
class TrainState:
    lr: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    seed: int = 0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    best: Snapshot | None = None
    # (epoch, train loss, validation MADL) per epoch
    history: list[tuple[int, float, float]] = field(default_factory=list)
    init_val_loss: float = float("nan")


def adam_step(state: TrainState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    """Update ``params`` in place and advance ``state`` by one step."""
    for k, g in grads.items():
        if params[k].shape != np.shape(g):
            raise ShapeMismatch(f"{k}: gradient {np.shape(g)} vs parameter {params[k].shape}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for k, p in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
