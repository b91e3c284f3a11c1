"""ARMA(p, q) mean with GARCH(1, 1) Gaussian errors.

Model for a window of log returns ``r``::

    r_t = mu + sum_i phi_i r_{t-i} + sum_j theta_j e_{t-j} + e_t
    e_t = sqrt(h_t) z_t,  z_t ~ N(0, 1)
    h_t = omega + alpha e_{t-1}^2 + beta h_{t-1}

Likelihood conventions: pre-sample returns equal the window mean, pre-sample
residuals are zero and ``h_0`` is the window's sample variance, so every
(p, q) is scored on the same number of observations.

Estimation runs on the window divided by its standard deviation, with
``omega = exp(a)``, ``alpha + beta = logistic(b)`` and
``alpha / (alpha + beta) = logistic(c)``; the stationarity constraints hold
for any value of the free parameters.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, logit

from .data import ReturnSeries
from .errors import DegenerateWindow, InsufficientHistory, NoConvergedFit, NonFiniteInput
from .signals import SignalSeries

logger = logging.getLogger(__name__)

CRITERIA = ("AIC", "BIC", "HQC")
MAX_ORDER = 5
MIN_WINDOW = 50

_LOG_2PI = math.log(2.0 * math.pi)
_BAD = 1e12
# (alpha, beta) starting points; the multi-start guards against local optima.
_STARTS = ((0.05, 0.90), (0.10, 0.80), (0.02, 0.97))
_COEF_BOUND = 0.999
_BOUNDS_TAIL = [(-25.0, 3.0), (-8.0, 10.0), (-10.0, 10.0)]


@dataclass(frozen=True)
class ArimaGarchSpec:
    p: int = 0
    q: int = 0
    d: int = 0

    def __post_init__(self):
        if not (0 <= self.p <= MAX_ORDER and 0 <= self.q <= MAX_ORDER):
            raise ValueError(f"orders must lie in [0, {MAX_ORDER}], got ({self.p}, {self.q})")
        if self.d != 0:
            raise ValueError("only d = 0 is supported")

    @property
    def n_params(self) -> int:
        # mu, omega, alpha, beta plus the ARMA coefficients
        return self.p + self.q + 4


@dataclass(frozen=True)
class ArimaGarchFit:
    spec: ArimaGarchSpec
    mu: float
    phi: tuple[float, ...]
    theta: tuple[float, ...]
    omega: float
    alpha: float
    beta: float
    loglik: float
    ic: dict = field(compare=False)
    converged: bool
    n_obs: int

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


def information_criteria(loglik: float, k: int, n: int) -> dict[str, float]:
    if n <= k:
        raise ValueError(f"need n > k, got n={n}, k={k}")
    return {
        "aic": 2.0 * k - 2.0 * loglik,
        "bic": k * math.log(n) - 2.0 * loglik,
        "hqc": 2.0 * k * math.log(math.log(n)) - 2.0 * loglik,
    }


def _filter(y: np.ndarray, mu: float, phi: np.ndarray, theta: np.ndarray,
            omega: float, alpha: float, beta: float, fill: float, h0: float):
    n = len(y)
    p = len(phi)
    u = y - mu
    if p:
        pad = np.concatenate([np.full(p, fill), y])
        for i in range(p):
            u = u - phi[i] * pad[p - 1 - i: p - 1 - i + n]
    eps = lfilter([1.0], np.r_[1.0, theta], u) if len(theta) else u
    h = np.empty(n)
    h[0] = h0
    if n > 1:
        drive = omega + alpha * eps[:-1] ** 2
        h[1:] = lfilter([1.0], [1.0, -beta], drive, zi=[beta * h0])[0]
    return eps, h


def _unpack(x: np.ndarray, p: int, q: int):
    mu = x[0]
    phi = x[1:1 + p]
    theta = x[1 + p:1 + p + q]
    omega = math.exp(x[1 + p + q])
    rho = expit(x[2 + p + q])
    share = expit(x[3 + p + q])
    return mu, phi, theta, omega, rho * share, rho * (1.0 - share)


def _negloglik(x, y, p, q, fill):
    """Negative log-likelihood and its gradient in the free parameters."""
    mu, phi, theta, omega, alpha, beta = _unpack(x, p, q)
    n = len(y)
    k = len(x)
    with np.errstate(all="ignore"):
        eps, h = _filter(y, mu, phi, theta, omega, alpha, beta, fill, 1.0)
        if not (np.all(np.isfinite(eps)) and np.all(h > 0)):
            return _BAD, np.zeros(k)
        val = 0.5 * float(np.sum(_LOG_2PI + np.log(h) + eps * eps / h))
        if not math.isfinite(val):
            return _BAD, np.zeros(k)

        # d eps / d (mu, phi, theta): the same MA filter applied to the forcing terms
        m = 1 + p + q
        force = np.zeros((m, n))
        force[0] = -1.0
        if p:
            pad = np.concatenate([np.full(p, fill), y])
            for i in range(p):
                force[1 + i] = -pad[p - 1 - i: p - 1 - i + n]
        for j in range(q):
            force[1 + p + j, j + 1:] = -eps[: n - j - 1]
        deps = lfilter([1.0], np.r_[1.0, theta], force, axis=1) if q else force

        # d h / d x through the GARCH recursion, h_0 fixed
        rho = alpha + beta
        share = alpha / rho
        drive = np.zeros((k, n))
        drive[:m, 1:] = 2.0 * alpha * eps[:-1] * deps[:, :-1]
        e2 = eps[:-1] ** 2
        hp = h[:-1]
        drho = rho * (1.0 - rho)
        dshare = share * (1.0 - share)
        drive[m, 1:] = omega
        drive[m + 1, 1:] = drho * (share * e2 + (1.0 - share) * hp)
        drive[m + 2, 1:] = rho * dshare * (e2 - hp)
        dh = lfilter([1.0], [1.0, -beta], drive, axis=1)

        wh = 0.5 * (1.0 / h - eps * eps / (h * h))
        grad = dh @ wh
        grad[:m] += deps @ (eps / h)
    if not np.all(np.isfinite(grad)):
        return _BAD, np.zeros(k)
    return val, grad


def _start_vector(p, q, mean, alpha, beta, omega_scaled=None):
    rho = alpha + beta
    om = omega_scaled if omega_scaled is not None else max(1.0 - rho, 1e-6)
    return np.r_[mean, np.zeros(p + q), math.log(om), logit(rho), logit(alpha / rho)]


def _check_window(returns) -> np.ndarray:
    r = np.asarray(getattr(returns, "log_returns", returns), dtype=float)
    if not np.all(np.isfinite(r)):
        raise NonFiniteInput("window contains NaN or inf")
    return r


def fit(returns, spec: ArimaGarchSpec, starts: int = 3, warm_start: ArimaGarchFit | None = None) -> ArimaGarchFit:
    """Gaussian quasi-maximum-likelihood fit of one specification.

    Starting points are tried in turn until one converges: ``warm_start``
    (a previous fit of the same spec) first if given, then up to ``starts``
    default (alpha, beta) pairs. The fit is marked non-converged only when
    every start fails.
    """
    r = _check_window(returns)
    n = len(r)
    if n < MIN_WINDOW + spec.p + spec.q:
        raise InsufficientHistory(f"window of {n} is below {MIN_WINDOW + spec.p + spec.q}")
    scale = float(np.std(r))
    if not scale > 1e-12 * max(1.0, float(np.max(np.abs(r)))):
        raise DegenerateWindow("window has zero variance")
    y = r / scale
    fill = float(np.mean(y))
    p, q = spec.p, spec.q
    bounds = [(-50.0, 50.0)] + [(-_COEF_BOUND, _COEF_BOUND)] * (p + q) + _BOUNDS_TAIL

    candidates = []
    if warm_start is not None and warm_start.spec == spec:
        w = warm_start
        x0 = np.r_[
            w.mu / scale, w.phi, w.theta,
            math.log(max(w.omega / scale**2, 1e-10)),
            logit(min(max(w.persistence, 1e-4), 0.9999)),
            logit(min(max(w.alpha / max(w.persistence, 1e-12), 1e-4), 1 - 1e-4)),
        ]
        candidates.append(x0)
    candidates.extend(_start_vector(p, q, fill, a, b) for a, b in _STARTS[:starts])

    best = None
    for x0 in candidates:
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(_negloglik, x0, args=(y, p, q, fill), jac=True, method="L-BFGS-B", bounds=bounds)
        ok = bool(res.success) and res.fun < _BAD
        if best is None or (ok, -res.fun) > (best[0], -best[1].fun):
            best = (ok, res)
        if ok:
            break

    ok, res = best
    mu, phi, theta, omega, alpha, beta = _unpack(res.x, p, q)
    loglik = -float(res.fun) - n * math.log(scale)
    converged = ok and omega > 0 and alpha >= 0 and beta >= 0 and alpha + beta < 1
    return ArimaGarchFit(
        spec=spec,
        mu=float(mu) * scale,
        phi=tuple(float(v) for v in phi),
        theta=tuple(float(v) for v in theta),
        omega=float(omega) * scale**2,
        alpha=float(alpha),
        beta=float(beta),
        loglik=loglik,
        ic=information_criteria(loglik, spec.n_params, n),
        converged=converged,
        n_obs=n,
    )


def residuals(fit_: ArimaGarchFit, returns) -> tuple[np.ndarray, np.ndarray]:
    """Residuals and conditional variances of ``returns`` under a fitted model."""
    r = _check_window(returns)
    if len(r) == 0:
        raise InsufficientHistory("no returns")
    return _filter(
        r, fit_.mu, np.asarray(fit_.phi), np.asarray(fit_.theta),
        fit_.omega, fit_.alpha, fit_.beta, float(np.mean(r)), float(np.var(r)),
    )


def forecast_one_step(fit_: ArimaGarchFit, recent) -> float:
    """Conditional mean of the next return given ``recent`` returns.

    Residuals are rebuilt by running the model over all of ``recent``, so
    pass the estimation window (or a longer history ending at the same point).
    """
    r = _check_window(recent)
    p, q = fit_.spec.p, fit_.spec.q
    if p == 0 and q == 0:
        return fit_.mu
    if len(r) < max(p, q):
        raise InsufficientHistory(f"need {max(p, q)} returns, got {len(r)}")
    eps, _ = residuals(fit_, r)
    out = fit_.mu
    for i in range(p):
        out += fit_.phi[i] * r[-1 - i]
    for j in range(q):
        out += fit_.theta[j] * eps[-1 - j]
    return float(out)


def _criterion_key(criterion: str) -> str:
    c = criterion.upper()
    if c == "SBC":
        c = "BIC"
    if c not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    return c.lower()


def grid_fits(returns, pmax: int = MAX_ORDER, qmax: int = MAX_ORDER, starts: int = 3) -> dict[tuple[int, int], ArimaGarchFit]:
    """Fit every (p, q) in the grid; specs whose fit raises are left out."""
    out = {}
    for p in range(pmax + 1):
        for q in range(qmax + 1):
            try:
                out[(p, q)] = fit(returns, ArimaGarchSpec(p, q), starts=starts)
            except (InsufficientHistory, DegenerateWindow, NonFiniteInput) as exc:
                logger.debug("fit (%d, %d) skipped: %s", p, q, exc)
    return out


def choose_spec(fits: dict[tuple[int, int], ArimaGarchFit], criterion: str = "AIC") -> ArimaGarchFit:
    key = _criterion_key(criterion)
    ok = [f for f in fits.values() if f.converged and math.isfinite(f.ic[key])]
    if not ok:
        raise NoConvergedFit(f"none of {len(fits)} fits converged")
    return min(ok, key=lambda f: (f.ic[key], f.spec.p + f.spec.q, f.spec.p))


def select_orders(returns, criterion: str = "AIC", pmax: int = MAX_ORDER, qmax: int = MAX_ORDER) -> ArimaGarchSpec:
    """Exhaustive (p, q) search; smallest criterion wins, ties go to the
    smaller p + q and then the smaller p."""
    return choose_spec(grid_fits(returns, pmax, qmax), criterion).spec


@dataclass
class RollingConfig:
    first_oos: int = 252
    criterion: str = "AIC"
    pmax: int = MAX_ORDER
    qmax: int = MAX_ORDER
    window: str = "expanding"
    window_years: float = 3.0
    refit_every: int = 1

    def __post_init__(self):
        if self.window not in ("expanding", "rolling"):
            raise ValueError("window must be 'expanding' or 'rolling'")
        _criterion_key(self.criterion)
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")


@dataclass(frozen=True)
class ForecastEntry:
    timestamp: np.datetime64
    p: int | None
    q: int | None
    mu: float
    omega: float
    alpha: float
    beta: float
    forecast: float
    refit: bool
    reselected: bool
    fallback: bool


@dataclass
class RollingForecastLog:
    entries: list[ForecastEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "p", "q", "mu", "omega", "alpha", "beta", "forecast", "fallback"])
            for e in self.entries:
                row = [pd.Timestamp(e.timestamp).isoformat(),
                       "" if e.p is None else e.p, "" if e.q is None else e.q]
                row += ["" if not math.isfinite(v) else repr(v)
                        for v in (e.mu, e.omega, e.alpha, e.beta, e.forecast)]
                row.append(int(e.fallback))
                w.writerow(row)


def _quarter(ts: np.datetime64) -> tuple[int, int]:
    t = pd.Timestamp(ts)
    return t.year, (t.month - 1) // 3


def rolling_signal(returns: ReturnSeries, config: RollingConfig | None = None) -> tuple[SignalSeries, RollingForecastLog]:
    """Daily re-estimation with order reselection at each new calendar quarter.

    The position stamped at return ``j - 1`` is the sign of the forecast of
    return ``j`` made from returns ``< j``. When estimation fails the last
    converged model is reused; before any model exists the position is flat.
    """
    cfg = config or RollingConfig()
    r = returns.log_returns
    ts = returns.timestamps
    n = len(r)
    if n <= cfg.first_oos or cfg.first_oos < 1:
        raise InsufficientHistory(f"{n} returns do not cover an initial window of {cfg.first_oos}")
    span = np.timedelta64(int(round(cfg.window_years * 365)), "D")

    log = RollingForecastLog()
    positions, forecasts = [], []
    nan = float("nan")
    spec: ArimaGarchSpec | None = None
    last_good: ArimaGarchFit | None = None
    current_quarter = None
    for step, j in enumerate(range(cfg.first_oos, n)):
        t_dec = ts[j - 1]
        start = 0
        if cfg.window == "rolling":
            start = int(np.searchsorted(ts, t_dec - span, side="right"))
        window = r[start:j]

        reselected = False
        fallback = False
        today: ArimaGarchFit | None = None
        quarter = _quarter(t_dec)
        if quarter != current_quarter:
            current_quarter = quarter
            reselected = True
            try:
                today = choose_spec(grid_fits(window, cfg.pmax, cfg.qmax), cfg.criterion)
                spec = today.spec
            except NoConvergedFit as exc:
                logger.info("%s: order selection failed at %s: %s", returns.asset_id, t_dec, exc)
                fallback = True

        refit = step % cfg.refit_every == 0
        if today is None and spec is not None and refit:
            warm = last_good if last_good is not None and last_good.spec == spec else None
            try:
                today = fit(window, spec, warm_start=warm)
            except (InsufficientHistory, DegenerateWindow, NonFiniteInput) as exc:
                logger.info("%s: fit failed at %s: %s", returns.asset_id, t_dec, exc)
        if today is not None and today.converged:
            last_good = today
        elif refit or reselected:
            fallback = True

        model = last_good
        if model is None:
            fc = float("nan")
            pos = 0
            fallback = True
        else:
            fc = forecast_one_step(model, window)
            pos = 1 if fc >= 0 else -1
        positions.append(pos)
        forecasts.append(fc)
        log.entries.append(ForecastEntry(
            timestamp=t_dec,
            p=None if model is None else model.spec.p,
            q=None if model is None else model.spec.q,
            mu=nan if model is None else model.mu,
            omega=nan if model is None else model.omega,
            alpha=nan if model is None else model.alpha,
            beta=nan if model is None else model.beta,
            forecast=fc,
            refit=refit or reselected,
            reselected=reselected,
            fallback=fallback,
        ))

    sig = SignalSeries(returns.asset_id, ts[cfg.first_oos - 1:n - 1], positions, forecasts)
    return sig, log
