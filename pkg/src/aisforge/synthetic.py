"""Seeded return generators with their latent truth exposed.

Every generator draws from ``numpy.random.Generator(PCG64(seed))``; PCG64's
stream is fixed across platforms and numpy versions, so outputs are stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from .data import Frequency, ReturnSeries
from .errors import InvalidParameters

KINDS = ("gaussian_iid", "ar1", "arma_garch", "sign_persistent", "regime_switch")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "gaussian_iid": {"mu": 0.0, "sigma": 0.01},
    "ar1": {"mu": 0.0, "phi": 0.0, "sigma": 0.01},
    "sign_persistent": {"mu": 0.0, "phi": 0.9, "sigma": 0.01},
    "arma_garch": {"mu": 0.0, "phi": [], "theta": [], "omega": 1e-6, "alpha": 0.1, "beta": 0.85},
    "regime_switch": {"mu": [0.001, -0.001], "sigma": [0.008, 0.02], "p_stay": [0.98, 0.95]},
}


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: dict = field(default_factory=dict)
    length: int = 1000
    seed: int = 0
    frequency: Frequency = Frequency.DAILY
    asset_id: str = "SYN"
    start: str = "2000-01-03"
    burn_in: int = 500

    def resolved_params(self) -> dict:
        if self.kind not in _DEFAULTS:
            raise InvalidParameters(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise InvalidParameters(f"{self.kind}: unknown parameters {sorted(unknown)}")
        return {**_DEFAULTS[self.kind], **self.params}


@dataclass(frozen=True)
class Generated:
    returns: ReturnSeries
    # Conditional mean of each return given the past.
    cond_mean: np.ndarray
    # Conditional variance of each return given the past.
    cond_var: np.ndarray
    innovations: np.ndarray
    states: np.ndarray | None = None


def make_timestamps(n: int, frequency: Frequency | str = Frequency.DAILY, start: str = "2000-01-03") -> np.ndarray:
    if Frequency(frequency) is Frequency.DAILY:
        return pd.bdate_range(start=start, periods=n).values
    return pd.date_range(start=start, periods=n, freq="h").values


def _check_ar(phi) -> np.ndarray:
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if phi.size:
        roots = np.roots(np.r_[1.0, -phi])
        if np.any(np.abs(roots) >= 1.0):
            raise InvalidParameters(f"AR coefficients {phi.tolist()} are not stationary")
    return phi


def generate(spec: GeneratorSpec) -> Generated:
    p = spec.resolved_params()
    n = int(spec.length)
    if n < 1:
        raise InvalidParameters("length must be >= 1")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    total = n + spec.burn_in
    states = None

    if spec.kind == "gaussian_iid":
        if p["sigma"] <= 0:
            raise InvalidParameters("sigma must be > 0")
        z = rng.standard_normal(total)
        mean = np.full(total, float(p["mu"]))
        var = np.full(total, float(p["sigma"]) ** 2)
        eps = p["sigma"] * z
        r = mean + eps
    elif spec.kind in ("ar1", "sign_persistent"):
        phi = float(_check_ar(p["phi"])[0])
        if p["sigma"] <= 0:
            raise InvalidParameters("sigma must be > 0")
        eps = p["sigma"] * rng.standard_normal(total)
        r = np.empty(total)
        mean = np.empty(total)
        prev = p["mu"] / (1.0 - phi)
        for t in range(total):
            mean[t] = p["mu"] + phi * prev
            r[t] = mean[t] + eps[t]
            prev = r[t]
        var = np.full(total, float(p["sigma"]) ** 2)
    elif spec.kind == "arma_garch":
        phi = _check_ar(p["phi"])
        theta = np.atleast_1d(np.asarray(p["theta"], dtype=float))
        omega, alpha, beta = float(p["omega"]), float(p["alpha"]), float(p["beta"])
        if omega <= 0 or alpha < 0 or beta < 0 or alpha + beta >= 1:
            raise InvalidParameters("GARCH parameters need omega > 0, alpha, beta >= 0, alpha + beta < 1")
        z = rng.standard_normal(total)
        r, mean, var, eps = _simulate_arma_garch(float(p["mu"]), phi, theta, omega, alpha, beta, z)
    else:
        mus = np.asarray(p["mu"], dtype=float)
        sig = np.asarray(p["sigma"], dtype=float)
        stay = np.asarray(p["p_stay"], dtype=float)
        if mus.shape != (2,) or sig.shape != (2,) or stay.shape != (2,):
            raise InvalidParameters("regime_switch takes two-element mu, sigma, p_stay")
        if np.any(sig <= 0) or np.any((stay <= 0) | (stay >= 1)):
            raise InvalidParameters("regime_switch needs sigma > 0 and 0 < p_stay < 1")
        u = rng.random(total)
        z = rng.standard_normal(total)
        states = np.empty(total, dtype=np.int8)
        s = 0
        for t in range(total):
            if u[t] > stay[s]:
                s = 1 - s
            states[t] = s
        mean = mus[states]
        var = sig[states] ** 2
        eps = sig[states] * z
        r = mean + eps

    keep = slice(spec.burn_in, None)
    ts = make_timestamps(n, spec.frequency, spec.start)
    rs = ReturnSeries.from_log_returns(spec.asset_id, ts, r[keep], spec.frequency, initial_price=100.0)
    return Generated(
        rs,
        np.asarray(mean[keep]),
        np.asarray(var[keep]),
        np.asarray(eps[keep]),
        None if states is None else states[keep],
    )


def _simulate_arma_garch(mu, phi, theta, omega, alpha, beta, z):
    total = len(z)
    p, q = len(phi), len(theta)
    r = np.zeros(total)
    eps = np.zeros(total)
    h = np.empty(total)
    mean = np.empty(total)
    h_prev = omega / (1.0 - alpha - beta)
    e_prev = 0.0
    for t in range(total):
        h[t] = omega + alpha * e_prev**2 + beta * h_prev
        m = mu
        for i in range(1, p + 1):
            if t - i >= 0:
                m += phi[i - 1] * r[t - i]
        for j in range(1, q + 1):
            if t - j >= 0:
                m += theta[j - 1] * eps[t - j]
        mean[t] = m
        eps[t] = np.sqrt(h[t]) * z[t]
        r[t] = m + eps[t]
        h_prev, e_prev = h[t], eps[t]
    return r, mean, h, eps


def random_walk_prices(n: int, seed: int, sigma: float = 0.01, p0: float = 100.0) -> np.ndarray:
    """Geometric random-walk price path of length ``n``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return p0 * np.exp(np.concatenate([[0.0], np.cumsum(sigma * rng.standard_normal(n - 1))]))
