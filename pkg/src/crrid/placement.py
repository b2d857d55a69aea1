"""Closed-form partial pole placement for the neutral quasipolynomial.

Coefficient assignment from prescribed real roots, delay solving, two-root
region classification, remaining-spectrum characterisation, controller gain
synthesis and the constants of the exponential estimate.
"""
from __future__ import annotations

import cmath
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate, optimize

from .core import NeutralQuasiPoly, f1, f2

log = logging.getLogger(__name__)

__all__ = [
    "RootTriple",
    "RootPair",
    "RegionLabel",
    "Dominance",
    "ControllerDesign",
    "SpectrumCharacterization",
    "ExpEstimate",
    "IcrridBox",
    "UnreachableRateError",
    "assign_three",
    "coeff_a",
    "assign_two_exact",
    "region_boundaries",
    "classify_two_root",
    "imid_check",
    "tau_solutions",
    "tau_star_three",
    "solve_tau_for_a",
    "design_pd",
    "design_p",
    "tau_star_pair",
    "remaining_spectrum_three",
    "remaining_spectrum_two",
    "exp_estimate",
    "icrrid_coeffs",
    "icrrid_v_roots",
    "icrrid_witness_box",
]

TIE_TOL = 1e-12
AXIS_TOL = 1e-10


class UnreachableRateError(ValueError):
    """The prescribed decay rate cannot be met for the given plant."""


@dataclass(frozen=True)
class RootTriple:
    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        if not self.s3 < self.s2 < self.s1:
            raise ValueError(f"roots must satisfy s3 < s2 < s1, got {self}")

    @property
    def d(self) -> float:
        return self.s1 - self.s2

    @property
    def delta(self) -> float:
        return self.s1 - self.s3

    @property
    def equidistributed(self) -> bool:
        scale = max(1.0, abs(self.s1), abs(self.s3))
        return abs(self.s1 - 2 * self.s2 + self.s3) < 1e-12 * scale

    def as_tuple(self):
        return (self.s1, self.s2, self.s3)


@dataclass(frozen=True)
class RootPair:
    s1: float
    s2: float

    def __post_init__(self):
        if not self.s2 <= self.s1:
            raise ValueError(f"roots must satisfy s2 <= s1, got {self}")

    @property
    def delta(self) -> float:
        return self.s1 - self.s2

    @property
    def double(self) -> bool:
        return self.s1 == self.s2

    def as_tuple(self):
        return (self.s1, self.s2)


@dataclass(frozen=True)
class RegionLabel:
    """Two-root region R1..R5; ``x`` is the coexisting third real root.

    ``boundary`` lists both adjacent labels when Lambda3 sits on a region
    boundary (within 1e-12).
    """

    label: str
    x: Optional[float]
    lam3: float
    phi: tuple
    boundary: tuple = ()

    @property
    def s1_strictly_dominant(self) -> bool:
        return self.label in ("R2", "R3", "R4")


class Dominance(str, enum.Enum):
    STRICT = "strictly_dominant"
    BOUNDARY = "dominant_not_strict"
    NOT = "not_dominant"


@dataclass
class ControllerDesign:
    kind: str
    kp: float
    kd: float
    tau: float
    plant_a: float
    assigned_roots: Union[RootTriple, RootPair]
    nu: Optional[float] = None
    mu: Optional[float] = None
    certificate: object = None
    notes: list = field(default_factory=list)

    @property
    def quasipoly(self) -> NeutralQuasiPoly:
        return NeutralQuasiPoly(self.plant_a, self.kd, self.kp, self.tau)

    @property
    def s1(self) -> float:
        return self.assigned_roots.s1

    def gain_norms(self) -> dict:
        g = np.array([self.kp, self.kd])
        return {
            "max": float(np.max(np.abs(g))),
            "sum": float(np.sum(np.abs(g))),
            "euclidean": float(np.hypot(self.kp, self.kd)),
        }


@dataclass
class SpectrumCharacterization:
    on_axis: bool
    axis_re: float
    theta: float
    xi: float
    omegas: list
    roots: list
    note: str = ""


@dataclass
class ExpEstimate:
    epsilon: float
    k: float
    k0: float
    rate: float
    T_cut: float


@dataclass
class IcrridBox:
    A1: float
    A2: float
    A3: float
    v1: float
    v2: float


# -- three-root assignment -------------------------------------------------

def _zeta(roots: RootTriple, tau: float) -> float:
    # F1(s2,s3)/(tau F2(s1,s2,s3)); both shifted by -s1 (common factor cancels)
    s1, s2, s3 = roots.as_tuple()
    return f1(tau, s2 - s1, s3 - s1) / (tau * f2(tau, 0.0, s2 - s1, s3 - s1))


def coeff_a(roots: RootTriple, tau: float) -> float:
    """Instantaneous coefficient a(tau) forced by the three assigned roots."""
    return -roots.s1 - _zeta(roots, tau)


def assign_three(roots: RootTriple, tau: float) -> NeutralQuasiPoly:
    """Coefficients (a, alpha, beta) giving Delta the three real roots.

    Uses the divided-difference forms; alpha = F2(s1+s2, s1+s3, s2+s3) /
    F2(s1, s2, s3), a = -s1 - zeta, beta = -alpha s1 + zeta exp(tau s1).
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    s1, s2, s3 = roots.as_tuple()
    num = f2(tau, s2 - s1, s3 - s1, s2 + s3 - 2 * s1)
    den = f2(tau, 0.0, s2 - s1, s3 - s1)
    alpha = math.exp(tau * s1) * num / den
    zeta = _zeta(roots, tau)
    a = -s1 - zeta
    beta = -alpha * s1 + zeta * math.exp(tau * s1)
    return NeutralQuasiPoly(a, alpha, beta, tau)


def tau_solutions(roots: RootTriple, a_target: float, n_grid: int = 160) -> list:
    """All bracketed solutions tau > 0 of a(tau) = a_target, ascending."""
    s1 = roots.s1
    if not a_target < -s1:
        raise UnreachableRateError(
            f"prescribed rate unreachable: require s1 < {-a_target!r} (s1={s1!r})")

    def g(t):
        return coeff_a(roots, t) - a_target

    hi = 1.0 / roots.delta
    for _ in range(400):
        if g(hi) > 0:
            break
        hi *= 2.0
    else:  # pragma: no cover - a(tau) -> -s1 guarantees termination
        raise RuntimeError("failed to bracket a(tau) = a_target")
    grid = np.geomspace(hi * 1e-9, hi, n_grid)
    vals = np.array([g(t) for t in grid])
    sols = []
    for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        if vals[i] == 0.0:
            sols.append(float(grid[i]))
            continue
        sols.append(optimize.brentq(g, grid[i], grid[i + 1],
                                    xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                    maxiter=500))
    return sols


def _closed_tau(roots: RootTriple, a_target: float) -> float:
    return math.log((-roots.s3 - a_target) / (-roots.s1 - a_target)) / roots.d


def _pick_tau(roots: RootTriple, a_target: float, sols: list) -> float:
    if len(sols) > 1:
        log.warning("a(tau) = %r has %d bracketed solutions %r; using the smallest",
                    a_target, len(sols), sols)
    tau = sols[0]
    if roots.equidistributed:
        closed = _closed_tau(roots, a_target)
        if abs(closed - tau) > 1e-9 * closed:
            log.warning("closed-form tau %r disagrees with bracketed %r", closed, tau)
        return closed
    return tau


def solve_tau_for_a(roots: RootTriple, a_target: float) -> float:
    """Smallest tau > 0 with a(tau) = a_target.

    Bracket scan on a geometric grid, then Brent's method; for
    equidistributed roots the closed form is returned after the cross-check.
    """
    return _pick_tau(roots, a_target, tau_solutions(roots, a_target))


def tau_star_three(roots: RootTriple, method: str = "auto") -> float:
    """The unique delay tau* with a(tau*) = 0 (exists iff s1 < 0).

    ``method`` is ``"auto"`` (closed form when equidistributed), ``"closed"``
    or ``"bracket"`` (numerical root of a(tau)).
    """
    if roots.s1 >= 0:
        raise ValueError("no stabilizing tau* exists: requires s1 < 0")
    if method == "closed" or (method == "auto" and roots.equidistributed):
        if not roots.equidistributed:
            raise ValueError("closed form requires equidistributed roots")
        return math.log(roots.s3 / roots.s1) / roots.d
    if method not in ("auto", "bracket"):
        raise ValueError(f"unknown method {method!r}")
    return tau_solutions(roots, 0.0)[0]


# -- controller synthesis ----------------------------------------------------

def design_pd(nu: float, mu: float, roots: RootTriple) -> ControllerDesign:
    """Delayed PD gains placing three real roots for the plant a = nu - mu."""
    a = nu - mu
    if not a < -roots.s1:
        raise UnreachableRateError(
            f"prescribed rate unreachable: require s1 < mu-nu = {mu - nu!r}")
    sols = tau_solutions(roots, a)
    tau = _pick_tau(roots, a, sols)
    qp = assign_three(roots, tau)
    notes = []
    if len(sols) > 1:
        notes.append(f"a(tau)=a_plant has {len(sols)} solutions {sols}; smallest used")
    return ControllerDesign("PD", kp=qp.beta, kd=qp.alpha, tau=tau, plant_a=a,
                            assigned_roots=roots, nu=nu, mu=mu, notes=notes)


def design_p(nu: float, mu: float, pair: RootPair) -> ControllerDesign:
    """Delayed P gain placing two real roots (or a double root) of
    ``s + a + kp' exp(-tau s)``."""
    a = nu - mu
    s1, s2 = pair.as_tuple()
    if not a + s1 < 0:
        raise UnreachableRateError(
            f"prescribed rate unreachable: require s1 < mu-nu = {mu - nu!r}")
    notes = []
    if pair.double:
        tau = -1.0 / (a + s1)
        kp = math.exp(tau * s1) / tau
        notes.append("non-semi-simple: sensitive to perturbation")
    else:
        tau = math.log((-s2 - a) / (-s1 - a)) / pair.delta
        kp = math.exp(tau * (s1 + s2)) / (tau * f1(tau, s1, s2))
    return ControllerDesign("P", kp=kp, kd=0.0, tau=tau, plant_a=a,
                            assigned_roots=pair, nu=nu, mu=mu, notes=notes)


def tau_star_pair(pair: RootPair) -> float:
    """Largest stabilising delay of the P design (a(tau) = 0)."""
    if pair.s1 >= 0:
        raise ValueError("no stabilizing tau* exists: requires s1 < 0")
    if pair.double:
        return -1.0 / pair.s1
    return math.log(pair.s2 / pair.s1) / pair.delta


# -- exactly two assigned roots -----------------------------------------------

def assign_two_exact(pair: RootPair, a: float, tau: float) -> NeutralQuasiPoly:
    """alpha, beta for which s1 > s2 are roots of Delta with the given a."""
    s1, s2 = pair.as_tuple()
    if not s2 < s1:
        raise ValueError("assign_two_exact requires s2 < s1")
    e1, e2 = math.exp(tau * s1), math.exp(tau * s2)
    alpha = (-(a + s1) * e1 + (a + s2) * e2) / (s1 - s2)
    beta = -alpha * s1 - e1 * (a + s1)
    return NeutralQuasiPoly(a, alpha, beta, tau)


def _em1_minus_x(x):
    # e^x - 1 - x
    if abs(x) < 1e-3:
        return x * x * (0.5 + x * (1 / 6 + x * (1 / 24 + x / 120)))
    return math.expm1(x) - x


def _xex_minus_em1(x):
    # x e^x - (e^x - 1) = sum_{n>=2} (n-1) x^n / n!
    if abs(x) < 1e-3:
        return x * x * (0.5 + x * (1 / 3 + x * (1 / 8 + x / 30)))
    return x * math.exp(x) - math.expm1(x)


def region_boundaries(delta: float, tau: float = 1.0) -> tuple:
    """(phi1, phi2, phi3, phi4) for the scaled gap x = tau*delta."""
    x = tau * delta
    em1 = math.expm1(x)
    phi1 = -em1 / _xex_minus_em1(x)
    phi2 = -x / _em1_minus_x(x)
    phi3 = -1.0 / em1
    return (phi1, phi2, phi3, 1.0)


def _deflated(qp: NeutralQuasiPoly, s1: float, s2: float, t: float) -> float:
    """Sign-faithful version of Delta(t) / ((t - s1)(t - s2)) on the real line.

    Multiplied by exp(tau t) left of s1 to avoid overflow; removable limits
    at the assigned roots.
    """
    if t == s1:
        return float(qp.deriv(s1).real) * (math.exp(qp.tau * s1) if t <= s1 else 1) / (s1 - s2)
    if t == s2:
        return float(qp.deriv(s2).real) * math.exp(qp.tau * s2) / (s2 - s1)
    if t < s1:
        g = (t + qp.a) * math.exp(qp.tau * t) + qp.alpha * t + qp.beta
    else:
        g = float(qp.real(t))
    return g / ((t - s1) * (t - s2))


def _find_sign_change(fun, anchor, step, direction, max_iter=200):
    fa = fun(anchor)
    far = anchor + direction * step
    for _ in range(max_iter):
        ff = fun(far)
        if np.sign(ff) != np.sign(fa):
            return far
        step *= 2.0
        far = anchor + direction * step
    return None


def classify_two_root(pair: RootPair, a: float, tau: float) -> RegionLabel:
    """Region of Lambda3 = (a + s1)/(s1 - s2) for two assigned roots s2 < s1.

    R1: third real root x > s1 (s1 not dominant); R2: s2 < x < s1;
    R3: x < s2; R4: exactly two real roots, s1 strictly dominant;
    R5: exactly two real roots, s1 not strictly dominant.
    """
    s1, s2 = pair.as_tuple()
    if not s2 < s1:
        raise ValueError("classification requires s2 < s1")
    delta = s1 - s2
    lam = (a + s1) / delta
    phi = region_boundaries(delta, tau)
    p1, p2, p3, _ = phi

    def tie(p):
        return abs(lam - p) <= TIE_TOL * max(1.0, abs(p))

    if tie(p1):
        return RegionLabel("R1", s1, lam, phi, ("R1", "R2"))
    if tie(p2):
        return RegionLabel("R2", s2, lam, phi, ("R2", "R3"))
    if tie(p3):
        # alpha = 0: retarded, x has escaped to -infinity
        return RegionLabel("R4", None, lam, phi, ("R3", "R4"))
    if tie(1.0):
        return RegionLabel("R5", None, lam, phi, ("R4", "R5"))
    if lam > 1.0:
        return RegionLabel("R5", None, lam, phi)
    if lam > p3:
        return RegionLabel("R4", None, lam, phi)

    qp = assign_two_exact(pair, a, tau)

    def fun(t):
        return _deflated(qp, s1, s2, t)

    if lam < p1:
        label, lo = "R1", s1
        hi = _find_sign_change(fun, s1, delta, +1)
    elif lam < p2:
        label, lo, hi = "R2", s2, s1
    else:
        label, hi = "R3", s2
        lo = _find_sign_change(fun, s2, delta, -1)
    if lo is None or hi is None:
        return RegionLabel(label, -math.inf if label == "R3" else math.inf, lam, phi)
    lo, hi = min(lo, hi), max(lo, hi)
    x = optimize.brentq(fun, lo, hi, xtol=1e-15 * max(1.0, abs(lo)), maxiter=500)
    return RegionLabel(label, float(x), lam, phi)


def imid_check(s1: float, a: float, tau: float) -> Dominance:
    """Dominance of a double root s1 placed with two-root theory."""
    v = tau * (a + s1)
    if abs(v) <= TIE_TOL:
        return Dominance.BOUNDARY
    if -1.0 - TIE_TOL <= v < 0.0:
        return Dominance.STRICT
    return Dominance.NOT


# -- remaining spectrum ---------------------------------------------------------

def _branch_root(h, dh, lo, hi, check):
    """Root of h on [lo, hi] (h(lo), h(hi) of opposite sign).

    Bisection down to width 1e-6 then Newton to 1e-12, falling back to
    Brent's method if Newton leaves the bracket.
    """
    flo = h(lo)
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        fm = h(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    w = 0.5 * (lo + hi)
    for _ in range(50):
        step = h(w) / dh(w)
        w -= step
        if not lo - 1e-6 <= w <= hi + 1e-6:
            w = optimize.brentq(h, lo, hi, xtol=1e-14)
            break
        if abs(step) < 1e-12 * max(1.0, abs(w)):
            break
    if not check(w):
        w = optimize.brentq(h, lo, hi, xtol=1e-15)
    return w


def _tan_branches(c, xi, n):
    # c tan(w/2) = w/xi, multiplied through by cos(w/2)
    def h(w):
        return c * math.sin(w / 2) - (w / xi) * math.cos(w / 2)

    def dh(w):
        return (c / 2 - 1 / xi) * math.cos(w / 2) + (w / (2 * xi)) * math.sin(w / 2)

    out = []
    for k in range(1, n + 1):
        lo, hi = (2 * k - 1) * math.pi, (2 * k + 1) * math.pi
        out.append(_branch_root(h, dh, lo, hi, lambda w: abs(h(w)) < 1e-11 * max(1.0, w)))
    return out


def _cot_branches(c, xi, n):
    # c cot(w/2) = -w/xi, multiplied through by sin(w/2)
    def h(w):
        return c * math.cos(w / 2) + (w / xi) * math.sin(w / 2)

    def dh(w):
        return (1 / xi - c / 2) * math.sin(w / 2) + (w / (2 * xi)) * math.cos(w / 2)

    out = []
    for k in range(n):
        lo, hi = 2 * k * math.pi, 2 * (k + 1) * math.pi
        out.append(_branch_root(h, dh, lo, hi, lambda w: abs(h(w)) < 1e-11 * max(1.0, w)))
    return out


def _chain_roots(theta, xi, guesses):
    """Newton on z - xi + exp(-z)(theta z + xi) from asymptotic guesses."""
    found = []
    for z in guesses:
        ok = False
        for _ in range(100):
            e = cmath.exp(-z)
            f = z - xi + e * (theta * z + xi)
            df = 1 - e * (theta * z + xi) + e * theta
            step = f / df
            z -= step
            if abs(step) < 1e-14 * max(1.0, abs(z)):
                ok = True
                break
        if ok and z.imag > 0.5 and all(abs(z - w) > 1e-7 for w in found):
            found.append(z)
    return sorted(found, key=lambda w: w.imag)


def remaining_spectrum_three(roots: RootTriple, tau: float,
                             n_branches: int = 5) -> SpectrumCharacterization:
    """Non-real spectrum of Delta with the three roots assigned at delay tau.

    When ln(theta) = xi (theta - 1)/(2 theta) the remaining roots lie on
    Re s = s2 + ln(theta)/tau with scaled imaginary parts solving
    (theta + 1)/(2 theta) tan(w/2) = w/xi, one per branch
    ((2k-1)pi, (2k+1)pi). Otherwise they form a chain asymptotic to
    ln(alpha)/tau and are located by Newton from the asymptotic guesses.
    """
    if n_branches < 1:
        raise ValueError("n_branches must be >= 1")
    s1, s2, s3 = roots.as_tuple()
    qp = assign_three(roots, tau)
    theta = qp.alpha * math.exp(-tau * s2)
    xi = f1(tau, 0.0, s3 - s1) / f2(tau, 0.0, s2 - s1, s3 - s1)
    lhs, rhs = math.log(theta), xi * (theta - 1) / (2 * theta)
    on_axis = abs(lhs - rhs) <= AXIS_TOL * max(1.0, abs(lhs), abs(rhs))
    if on_axis:
        c = (theta + 1) / (2 * theta)
        omegas = _tan_branches(c, xi, n_branches)
        axis_re = s2 + lhs / tau
        found = [complex(axis_re, w / tau) for w in omegas]
        note = "remaining spectrum on a vertical line"
    else:
        guesses = [complex(lhs, (2 * k + 1) * math.pi) for k in range(1, n_branches + 1)]
        zs = _chain_roots(theta, xi, guesses)
        omegas = []
        axis_re = math.log(qp.alpha) / tau
        found = [s2 + z / tau for z in zs]
        note = "remaining spectrum is a chain asymptotic to ln(alpha)/tau"
    return SpectrumCharacterization(on_axis, axis_re, theta, xi, omegas, found, note)


def remaining_spectrum_two(pair: RootPair, a: float, tau: float,
                           n_branches: int = 5) -> SpectrumCharacterization:
    """Non-real spectrum when exactly two real roots s2 < s1 are present."""
    if n_branches < 1:
        raise ValueError("n_branches must be >= 1")
    region = classify_two_root(pair, a, tau)
    if region.label not in ("R4", "R5"):
        raise ValueError("third real root present; use the three-root characterization")
    s1, s2 = pair.as_tuple()
    qp = assign_two_exact(pair, a, tau)
    alpha = qp.alpha
    e1 = math.exp(tau * s1)
    theta = alpha * math.exp(-tau * s2)
    ks = range(1, n_branches + 1)
    if abs(alpha + e1) <= TIE_TOL * e1:
        # Delta(s) = (s - s2)(1 - exp(-tau (s - s1)))
        return SpectrumCharacterization(
            True, s1, theta, 0.0, [2 * math.pi * k for k in ks],
            [complex(s1, 2 * math.pi * k / tau) for k in ks],
            "alpha = -exp(tau s1): s1 dominant but not strictly")
    if abs(alpha) <= TIE_TOL * e1:
        return SpectrumCharacterization(
            False, -math.inf, 0.0, 0.0, [], [],
            "alpha = 0: retarded, no neutral chain; no roots on Re s = s1 besides s1")
    xi = (alpha + e1) / f1(tau, s1, s2)
    if abs(theta + 1) <= TIE_TOL:
        # Lambda3 = 0: tau Delta(s2 + z/tau) = (z - xi)(1 - exp(-z))
        return SpectrumCharacterization(
            True, s2, theta, xi, [2 * math.pi * k for k in ks],
            [complex(s2, 2 * math.pi * k / tau) for k in ks],
            "theta = -1: remaining roots s2 + 2 pi i k / tau")
    lhs, rhs = math.log(-theta), xi * (theta - 1) / (2 * theta)
    on_axis = abs(lhs - rhs) <= AXIS_TOL * max(1.0, abs(lhs), abs(rhs))
    if on_axis:
        c = (theta + 1) / (2 * theta)
        omegas = _cot_branches(c, xi, n_branches)
        axis_re = s2 + lhs / tau
        found = [complex(axis_re, w / tau) for w in omegas]
        note = "remaining spectrum on a vertical line"
    else:
        guesses = [complex(lhs, 2 * k * math.pi) for k in ks]
        zs = _chain_roots(theta, xi, guesses)
        omegas = []
        axis_re = math.log(-alpha) / tau
        found = [s2 + z / tau for z in zs]
        note = "remaining spectrum is a chain asymptotic to ln(-alpha)/tau"
    return SpectrumCharacterization(on_axis, axis_re, theta, xi, omegas, found, note)


# -- exponential estimate ------------------------------------------------------

def _k_integral(qp, c1, shift, T_cut):
    # 2 * int_0^T_cut dT / (|Delta(c1 + iT)| sqrt(shift^2 + T^2)); integrand is even
    def fun(T):
        return 1.0 / (abs(complex(qp(complex(c1, T)))) * math.hypot(shift, T))

    val, _ = integrate.quad(fun, 0.0, T_cut, limit=1000, epsabs=0.0, epsrel=1e-10)
    return 2.0 * val


def exp_estimate(design: NeutralQuasiPoly, roots, epsilon: float) -> ExpEstimate:
    """Constant k >= 1 with |y(t)| <= k exp((s1 + eps) t) ||y0||.

    k0 (or k1 for two roots) is evaluated by adaptive quadrature of the
    contour integral that the estimate controls, plus the closed-form tail
    1/pi beyond the cut-off T1 (T2).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    qp = design
    tau, alpha = qp.tau, qp.alpha
    if isinstance(roots, RootPair) and alpha > 0 and not roots.double:
        region = classify_two_root(roots, qp.a, tau)
        if region.label not in ("R2", "R3") or region.x is None or not math.isfinite(region.x):
            raise ValueError(f"s1 is not a strictly dominant root (region {region.label})")
        s1 = roots.s1
        lo, hi = sorted((roots.s2, region.x))
        roots = RootTriple(s1, hi, lo)
    s1 = roots.s1
    c1 = s1 + epsilon
    if isinstance(roots, RootTriple):
        zeta = _zeta(roots, tau)
        margin = 1.0 - alpha * math.exp(-tau * s1)
        if not margin > 0:
            raise ValueError("alpha out of range for three assigned roots")
        T1 = 4.0 * zeta / margin
        k0 = zeta / math.pi * _k_integral(qp, c1, epsilon, T1) + 1.0 / math.pi
        k = (1 + k0) * (1 + alpha) / (1 - alpha * math.exp(-tau * c1))
        return ExpEstimate(epsilon, k, k0, c1, T1)
    s2 = roots.s2
    margin = 1.0 + alpha * math.exp(-tau * s1)
    if not margin > 0 or alpha > 0:
        raise ValueError("s1 is not a strictly dominant root (alpha <= -exp(tau s1))")
    kappa = (alpha + math.exp(tau * s1)) / (tau * f1(tau, s1, s2))
    T2 = 4.0 * kappa / margin
    k1 = kappa / math.pi * _k_integral(qp, c1, s1 - s2 + epsilon, T2) + 1.0 / math.pi
    k = (1 + k1) * (1 + abs(alpha)) / (1 + alpha * math.exp(-tau * c1))
    return ExpEstimate(epsilon, k, k1, c1, T2)


# -- beyond the FVL test: intermediate case witnesses -----------------------------

def icrrid_coeffs(A: float, u: float) -> tuple:
    """(C_a, C_b, C_c): u (Z - 1) = C_a v^2 + C_b v + C_c."""
    E = -math.expm1(-u)
    Ca = -2.0 * E
    Cb = -2.0 * E * A + (1 + u) * E - u * math.exp(-u)
    Cc = (E + u) * A - E * u
    return Ca, Cb, Cc


def _discriminant(A, u):
    Ca, Cb, Cc = icrrid_coeffs(A, u)
    return Cb * Cb - 4 * Ca * Cc


def icrrid_v_roots(A: float, u: float) -> tuple:
    """Sorted real roots v of u (Z(A, u, v) - 1) = 0; Z >= 1 between them."""
    Ca, Cb, Cc = icrrid_coeffs(A, u)
    D = Cb * Cb - 4 * Ca * Cc
    if D < 0:
        raise ValueError(f"no real roots: discriminant {D!r} < 0")
    sq = math.sqrt(D)
    # stable quadratic formula
    q = -0.5 * (Cb + math.copysign(sq, Cb))
    r1 = q / Ca
    r2 = Cc / q if q != 0 else -Cb / Ca - r1
    return (min(r1, r2) + 0.0, max(r1, r2) + 0.0)


def icrrid_witness_box(u: float) -> IcrridBox:
    """Parameter box in which Y(s1) >= 1 although s1 stays dominant."""
    if not u > 0:
        raise ValueError("u must be positive")
    E = -math.expm1(-u)
    A2 = E * u / (E + u)
    A3 = ((1 + u) * E - u * math.exp(-u)) / (2 * E)
    # D1 is a convex quadratic in A; A1 is its larger root, right of the vertex
    K = (1 + u) * E - u * math.exp(-u)
    vertex = (K - 2 * (E + u)) / (2 * E)
    if _discriminant(vertex, u) >= 0 or _discriminant(A2, u) < 0:
        raise RuntimeError("discriminant does not change sign below A2")
    A1 = optimize.brentq(lambda A: _discriminant(A, u), vertex, A2, xtol=1e-15)
    v1, v2 = icrrid_v_roots(A2, u)
    return IcrridBox(A1, A2, A3, v1, v2)
