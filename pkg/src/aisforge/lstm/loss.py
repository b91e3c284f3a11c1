"""Mean Absolute Directional Loss and its smooth training surrogate."""

from __future__ import annotations

import numpy as np

from ..errors import LengthMismatch, NonPositiveTemperature

DEFAULT_TAU = 1e-3


def _pair(observed, predicted):
    R = np.asarray(observed, dtype=float)
    P = np.asarray(predicted, dtype=float)
    if R.shape != P.shape or R.ndim != 1:
        raise LengthMismatch(f"observed {R.shape} vs predicted {P.shape}")
    if R.size == 0:
        raise LengthMismatch("MADL needs at least one observation")
    return R, P


def madl(observed, predicted) -> float:
    """Mean of ``-sign(R * R_hat) * |R|``: the average return earned by
    trading the predicted sign, negated. ``sign(0) = 0``."""
    R, P = _pair(observed, predicted)
    return float(np.mean(-np.sign(R * P) * np.abs(R)))


def madl_surrogate(observed, predicted, tau: float = DEFAULT_TAU) -> float:
    return madl_surrogate_grad(observed, predicted, tau)[0]


def madl_surrogate_grad(observed, predicted, tau: float = DEFAULT_TAU) -> tuple[float, np.ndarray]:
    """Loss ``mean(-tanh(R * R_hat / tau) * |R|)`` and its gradient in ``R_hat``.

    Tends to :func:`madl` as ``tau -> 0`` wherever ``R * R_hat != 0``.
    """
    if not tau > 0:
        raise NonPositiveTemperature(f"tau must be > 0, got {tau}")
    R, P = _pair(observed, predicted)
    t = np.tanh(R * P / tau)
    absR = np.abs(R)
    loss = float(np.mean(-t * absR))
    grad = -(1.0 - t * t) * (R / tau) * absR / len(R)
    return loss, grad
