"""Method-of-steps integration of scalar neutral equations in Hale form.

Both the linear equation d/dt[y + alpha y(t-tau)] = -a y - beta y(t-tau) and
the delayed-feedback Hopfield neuron are advanced in the variable
z = y + alpha y(t-tau), which turns each delay interval into an ordinary
differential equation driven by already computed values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import NeutralQuasiPoly

__all__ = [
    "History",
    "PlantSpec",
    "Trajectory",
    "integrate_linear_neutral",
    "integrate_hopfield",
    "estimate_decay_rate",
    "fixed_point",
]

MIN_STEPS_PER_DELAY = 16


def _hermite(t, t0, t1, y0, y1, d0, d1):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def _hermite_deriv(t, t0, t1, y0, y1, d0, d1):
    h = t1 - t0
    s = (t - t0) / h
    g00 = 6 * s * (s - 1) / h
    g10 = (1 - s) * (1 - 3 * s)
    g01 = -g00
    g11 = s * (3 * s - 2)
    return g00 * y0 + g10 * d0 + g01 * y1 + g11 * d1


class History:
    """Initial function on [-tau, 0] with a cubic Hermite interpolant.

    Parameters
    ----------
    grid : array_like
        Ascending times starting at ``-tau`` and ending at ``0``.
    values : array_like
        Samples of the initial function.
    derivatives : array_like, optional
        Derivative samples; centred finite differences when omitted.
    func, dfunc : callable, optional
        Exact initial function and derivative. When given they are used for
        point evaluation instead of the interpolant.
    """

    def __init__(self, grid, values, derivatives=None,
                 func: Optional[Callable] = None, dfunc: Optional[Callable] = None):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or values.shape != grid.shape:
            raise ValueError("grid and values must be 1-D arrays of equal length >= 2")
        if not np.all(np.diff(grid) > 0):
            raise ValueError("history grid must be strictly ascending")
        if grid[-1] != 0.0 or not grid[0] < 0:
            raise ValueError("history grid must span [-tau, 0]")
        if not np.all(np.isfinite(values)):
            raise ValueError("history values must be finite")
        if derivatives is None:
            derivatives = np.gradient(values, grid, edge_order=2)
        derivatives = np.asarray(derivatives, dtype=float)
        self.grid = grid
        self.values = values
        self.derivatives = derivatives
        self.func = func
        self.dfunc = dfunc

    @property
    def tau(self) -> float:
        return -float(self.grid[0])

    @property
    def sup_norm(self) -> float:
        if self.func is not None:
            fine = np.linspace(-self.tau, 0.0, 4097)
            return float(max(np.max(np.abs(self.func(fine))), np.max(np.abs(self.values))))
        return float(np.max(np.abs(self.values)))

    @classmethod
    def constant(cls, c: float, tau: float) -> "History":
        c = float(c)
        return cls(np.array([-tau, 0.0]), np.array([c, c]), np.zeros(2),
                   func=lambda t: np.full_like(np.asarray(t, dtype=float), c),
                   dfunc=lambda t: np.zeros_like(np.asarray(t, dtype=float)))

    @classmethod
    def from_function(cls, func, dfunc=None, tau: float = 1.0, n: int = 257) -> "History":
        grid = np.linspace(-tau, 0.0, n)
        grid[-1] = 0.0
        vals = np.asarray(func(grid), dtype=float) * np.ones_like(grid)
        ders = None if dfunc is None else np.asarray(dfunc(grid), dtype=float) * np.ones_like(grid)
        return cls(grid, vals, ders, func=func, dfunc=dfunc)

    def _locate(self, t):
        i = np.clip(np.searchsorted(self.grid, t, side="right") - 1, 0, self.grid.size - 2)
        return i

    def __call__(self, t):
        if self.func is not None:
            return np.asarray(self.func(t), dtype=float) * 1.0
        t = np.asarray(t, dtype=float)
        i = self._locate(t)
        g, v, d = self.grid, self.values, self.derivatives
        return _hermite(t, g[i], g[i + 1], v[i], v[i + 1], d[i], d[i + 1])

    def deriv(self, t):
        if self.dfunc is not None:
            return np.asarray(self.dfunc(t), dtype=float) * 1.0
        t = np.asarray(t, dtype=float)
        i = self._locate(t)
        g, v, d = self.grid, self.values, self.derivatives
        return _hermite_deriv(t, g[i], g[i + 1], v[i], v[i + 1], d[i], d[i + 1])


@dataclass(frozen=True)
class PlantSpec:
    """Hopfield neuron dy/dt = -nu y + mu sigma(y) + I with sigma = tanh."""

    nu: float
    mu: float
    nonlinearity: str = "tanh"

    def __post_init__(self):
        if not (self.nu > 0 and self.mu > 0):
            raise ValueError("nu and mu must be positive")
        if self.nonlinearity not in ("tanh", "linearized"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")

    @property
    def a(self) -> float:
        """Instantaneous coefficient of the linearisation at zero."""
        return self.nu - self.mu

    def sigma(self, y):
        return np.tanh(y) if self.nonlinearity == "tanh" else y


@dataclass
class Trajectory:
    """Uniformly sampled solution; ``derivs`` are right derivatives except at the last sample."""

    times: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    step: float
    tau: float


def _snap_step(tau, h):
    if not h > 0:
        raise ValueError("step must be positive")
    if h > tau / MIN_STEPS_PER_DELAY * (1 + 1e-12):
        raise ValueError(f"step must resolve the delay: h={h!r} > tau/16={tau / 16!r}")
    m = int(math.ceil(tau / h - 1e-9))
    return tau / m, m


def _method_of_steps(rhs, alpha, y0: History, tau, t_end, h):
    """Integrate d/dt[y + alpha y(t-tau)] = rhs(y, y(t-tau)) from t = 0.

    RK4 in z = y + alpha y(t-tau); delayed values at half steps come from the
    cubic Hermite interpolant of the stored solution.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if abs(y0.tau - tau) > 1e-12 * max(1.0, tau):
        raise ValueError(f"history spans [-{y0.tau!r}, 0] but tau = {tau!r}")
    h, m = _snap_step(tau, h)
    n = int(math.ceil(t_end / h - 1e-9))
    # index j <-> time (j - m) h; first m+1 entries hold the history
    tgrid = (np.arange(n + m + 1) - m) * h
    tgrid[m] = 0.0
    y = np.empty(n + m + 1)
    dp = np.empty(n + m + 1)   # right derivative
    dm = np.empty(n + m + 1)   # left derivative
    hist_t = tgrid[: m + 1]
    y[: m + 1] = y0(hist_t)
    dp[: m + 1] = y0.deriv(hist_t)
    dm[: m + 1] = dp[: m + 1]
    dp[m] = rhs(y[m], y[0]) - alpha * dp[0]

    hist_mid = y0(hist_t[:-1] + 0.5 * h)

    for j in range(m, n + m):
        k = j - m
        yd0, yd1 = y[k], y[k + 1]
        ydh = hist_mid[k] if k < m else 0.5 * (y[k] + y[k + 1]) + h / 8 * (dp[k] - dm[k + 1])
        z = y[j] + alpha * yd0

        def g(zz, yd):
            return rhs(zz - alpha * yd, yd)

        k1 = g(z, yd0)
        k2 = g(z + 0.5 * h * k1, ydh)
        k3 = g(z + 0.5 * h * k2, ydh)
        k4 = g(z + h * k3, yd1)
        z1 = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        y[j + 1] = z1 - alpha * yd1
        f1 = rhs(y[j + 1], yd1)
        dm[j + 1] = f1 - alpha * dm[k + 1]
        dp[j + 1] = f1 - alpha * dp[k + 1]
    derivs = dp[m:].copy()
    derivs[-1] = dm[-1]
    return Trajectory(tgrid[m:].copy(), y[m:].copy(), derivs, h, tau)


def integrate_linear_neutral(qp: NeutralQuasiPoly, y0: History, t_end: float,
                             h: float) -> Trajectory:
    """Solve d/dt[y + alpha y(t-tau)] = -a y - beta y(t-tau) for t in [0, t_end].

    ``h`` is snapped down to tau/m so that every multiple of tau is a grid
    point; steps coarser than tau/16 are rejected.
    """
    a, beta = qp.a, qp.beta

    def rhs(yy, yd):
        return -a * yy - beta * yd

    return _method_of_steps(rhs, qp.alpha, y0, qp.tau, t_end, h)


def integrate_hopfield(plant: PlantSpec, ctrl, y0: History, t_end: float,
                       h: float) -> Trajectory:
    """Delayed-feedback Hopfield neuron
    d/dt[y + kd y(t-tau)] = -nu y + mu sigma(y) - kp y(t-tau).

    ``ctrl`` is a :class:`~crrid.placement.ControllerDesign` (P designs have
    kd = 0) or ``None`` for the open loop, in which case the delay is taken
    from the history span.
    """
    if ctrl is None:
        kp = kd = 0.0
        tau = y0.tau
    else:
        kp, kd, tau = ctrl.kp, ctrl.kd, ctrl.tau
    nu, mu = plant.nu, plant.mu
    if plant.nonlinearity == "tanh":
        def rhs(yy, yd):
            return -nu * yy + mu * math.tanh(yy) - kp * yd
    else:
        def rhs(yy, yd):
            return (mu - nu) * yy - kp * yd
    return _method_of_steps(rhs, kd, y0, tau, t_end, h)


def estimate_decay_rate(traj: Trajectory, t_start: float, t_end: float,
                        interval: Optional[float] = None) -> float:
    """Least-squares slope of log sup|y| over consecutive intervals.

    Parameters
    ----------
    traj : Trajectory
    t_start, t_end : float
        Fitting window, which must lie inside the trajectory.
    interval : float, optional
        Envelope interval length; defaults to the delay ``traj.tau``.

    Raises
    ------
    ValueError
        If fewer than three intervals fit in the window or an envelope
        sample falls below 1e-13.
    """
    L = traj.tau if interval is None else float(interval)
    if not L > 0:
        raise ValueError("interval must be positive")
    t = traj.times
    if t_start < t[0] - 1e-12 or t_end > t[-1] + 1e-9 or not t_end > t_start:
        raise ValueError(f"window [{t_start}, {t_end}] not covered by trajectory "
                         f"[{t[0]}, {t[-1]}]")
    count = int(math.floor((t_end - t_start) / L + 1e-9))
    if count < 3:
        raise ValueError("window too short: fewer than 3 envelope intervals")
    mids, sups = [], []
    for i in range(count):
        lo, hi = t_start + i * L, t_start + (i + 1) * L
        sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        if not sel.any():
            raise ValueError("window too short: interval without samples")
        s = float(np.max(np.abs(traj.values[sel])))
        if s < 1e-13:
            raise ValueError("signal at floor: envelope below 1e-13")
        mids.append(0.5 * (lo + hi))
        sups.append(s)
    slope, _ = np.polyfit(np.array(mids), np.log(np.array(sups)), 1)
    return float(slope)


def fixed_point(plant: PlantSpec, y_start: float = 1.0, tol: float = 1e-14) -> float:
    """Positive equilibrium y = (mu/nu) sigma(y) by fixed-point iteration."""
    y = y_start
    for _ in range(10_000):
        y_new = plant.mu / plant.nu * float(plant.sigma(y))
        if abs(y_new - y) < tol:
            return y_new
        y = y_new
    raise RuntimeError("fixed-point iteration did not converge")
