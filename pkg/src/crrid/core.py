"""Evaluation kernel for the scalar neutral quasipolynomial

    Delta(s) = s + a + exp(-tau*s) * (alpha*s + beta)

together with the exponential divided-difference functions used by the
closed-form placement formulas and the scalar dominance criteria (the
Frasson-Verduyn Lunel test and its scaled variants).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NeutralQuasiPoly",
    "RetardedQuasiPoly",
    "ScaledParams",
    "eval_delta",
    "eval_delta_deriv",
    "coth",
    "f1",
    "f2",
    "fvl_V",
    "gcrrid_W",
    "gcrrid_v_boundary",
    "icrrid_Z",
]

F1_SERIES_GAP = 1e-6
F2_SERIES_GAP = 1e-4
COTH_SERIES = 1e-4


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite value {v!r}")


@dataclass(frozen=True)
class NeutralQuasiPoly:
    """Coefficients of ``s + a + exp(-tau s)(alpha s + beta)``."""

    a: float
    alpha: float
    beta: float
    tau: float

    def __post_init__(self):
        _check_finite(self.a, self.alpha, self.beta, self.tau)
        if not self.tau > 0:
            raise ValueError(f"delay must be positive, got tau={self.tau}")

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return s + self.a + np.exp(-self.tau * s) * (self.alpha * s + self.beta)

    def deriv(self, s):
        s = np.asarray(s, dtype=complex)
        return 1.0 + np.exp(-self.tau * s) * (
            self.alpha - self.tau * (self.alpha * s + self.beta))

    def real(self, t):
        """Delta on the real axis (float arithmetic)."""
        t = np.asarray(t, dtype=float)
        return t + self.a + np.exp(-self.tau * t) * (self.alpha * t + self.beta)

    def term_scale(self, s):
        """Magnitude of the summands of Delta(s); used to normalise residuals."""
        s = np.asarray(s, dtype=complex)
        return 1.0 + np.abs(s) + abs(self.a) + np.abs(np.exp(-self.tau * s)) * (
            abs(self.alpha) * np.abs(s) + abs(self.beta))

    @property
    def chain_abscissa(self) -> float:
        """Vertical asymptote ln|alpha|/tau of the neutral root chain.

        ``-inf`` for the retarded case ``alpha == 0``.
        """
        if self.alpha == 0.0:
            return -math.inf
        return math.log(abs(self.alpha)) / self.tau


@dataclass(frozen=True)
class RetardedQuasiPoly:
    """P-controller characteristic function ``s + a + kp exp(-tau s)``."""

    a: float
    kp: float
    tau: float

    def __post_init__(self):
        _check_finite(self.a, self.kp, self.tau)
        if not self.tau > 0:
            raise ValueError(f"delay must be positive, got tau={self.tau}")

    def as_neutral(self) -> NeutralQuasiPoly:
        return NeutralQuasiPoly(self.a, 0.0, self.kp, self.tau)

    def __call__(self, s):
        return self.as_neutral()(s)


@dataclass(frozen=True)
class ScaledParams:
    """Delay-scaled coordinates u = tau*d, v = tau*s1, A = tau*a."""

    u: float
    v: float
    A: float = 0.0

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError(f"u must be positive, got {self.u}")

    @classmethod
    def from_natural(cls, tau, d, s1, a=0.0):
        return cls(tau * d, tau * s1, tau * a)


def eval_delta(qp: NeutralQuasiPoly, s: complex) -> complex:
    s = complex(s)
    _check_finite(s.real, s.imag)
    e = np.exp(-qp.tau * s)
    return complex(s + qp.a + e * (qp.alpha * s + qp.beta))


def eval_delta_deriv(qp: NeutralQuasiPoly, s: complex) -> complex:
    s = complex(s)
    _check_finite(s.real, s.imag)
    e = np.exp(-qp.tau * s)
    return complex(1.0 + e * (qp.alpha - qp.tau * (qp.alpha * s + qp.beta)))


def coth(x: float) -> float:
    if abs(x) < COTH_SERIES:
        return 1.0 / x + x / 3.0
    return 1.0 / math.tanh(x)


def _x_coth_half(u: float) -> float:
    # u*coth(u/2), finite at u = 0
    if abs(u) < 2 * COTH_SERIES:
        return 2.0 + u * u / 6.0
    return u * coth(u / 2.0)


def _exp_dd_series(xs, order):
    """Divided difference of exp at the scaled nodes ``xs`` by power series.

    Uses exp[x_0..x_n] = e^c * sum_m h_m(x - c) / (m + n)!, h_m the complete
    homogeneous symmetric polynomials, c the node mean.
    """
    c = sum(xs) / len(xs)
    ys = [x - c for x in xs]
    n = len(xs) - 1
    # h_m via the generating product prod 1/(1 - y_i z)
    h = [1.0] + [0.0] * order
    for y in ys:
        for m in range(1, order + 1):
            h[m] += y * h[m - 1]
    total = 0.0
    for m in range(order, -1, -1):
        total += h[m] / math.factorial(m + n)
    return math.exp(c) * total


def f1(tau: float, u: float, v: float) -> float:
    """Integral of exp(tau(t u + (1-t) v)) over t in [0, 1].

    Closed form (e^{tau u} - e^{tau v}) / (tau (u - v)), written with expm1;
    series expansion when the scaled gap is below 1e-6.
    """
    x = tau * (u - v)
    if abs(x) < F1_SERIES_GAP:
        return math.exp(tau * v) * (1.0 + x / 2.0 + x * x / 6.0 + x ** 3 / 24.0)
    return math.exp(tau * v) * math.expm1(x) / x


def f2(tau: float, s1: float, s2: float, s3: float) -> float:
    """Double integral of (1 - t1) exp(tau(t1 s1 + (1-t1)(t2 s2 + (1-t2) s3))).

    Symmetric in its three node arguments; nodes are sorted first so any
    permutation takes the identical code path.
    """
    x1, x2, x3 = sorted((tau * s1, tau * s2, tau * s3), reverse=True)
    if x1 - x3 < F2_SERIES_GAP:
        return _exp_dd_series((x1, x2, x3), order=8)
    # recursive divided difference, algebraically equal to the three-term
    # closed form but without its cancellation at small gaps
    return (f1(1.0, x1, x2) - f1(1.0, x2, x3)) / (x1 - x3)


def fvl_V(qp: NeutralQuasiPoly, s0: float) -> float:
    """Frasson-Verduyn Lunel quantity; V < 1 certifies simple dominance of s0."""
    t = qp.tau
    return (abs(qp.alpha) * (1 + abs(s0) * t) + abs(qp.beta) * t) * math.exp(-s0 * t)


def gcrrid_W(u: float, v: float) -> float:
    if not u > 0:
        raise ValueError("u must be positive")
    return (1 - 2 * v + u + _x_coth_half(u)) * math.exp(-u)


def gcrrid_v_boundary(u: float) -> float:
    """Scaled s1 at which W(u, v) = 1; strictly decreasing from 1 at u=0+."""
    if not u > 0:
        raise ValueError("u must be positive")
    return (_x_coth_half(u) + u - math.expm1(u)) / 2.0


def icrrid_Z(A: float, u: float, v: float) -> float:
    """FVL quantity for exactly two assigned roots in scaled variables."""
    if not u > 0:
        raise ValueError("u must be positive")
    em = math.exp(-u)
    return (em * (A + v - u) * (-1 + 2 * v) + (A + v) * (1 - 2 * v + u)) / u
