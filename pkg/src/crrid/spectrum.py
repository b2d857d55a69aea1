"""Root localisation for the neutral quasipolynomial and dominance certificates.

Roots are counted with the argument principle on adaptively sampled
rectangle edges, isolated by quadrisection and polished by Newton's method.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .core import NeutralQuasiPoly

__all__ = [
    "Rectangle",
    "SpectrumReport",
    "DominanceCertificate",
    "SpectrumSolverError",
    "RootOnBoundaryError",
    "MaxDepthError",
    "count_roots",
    "find_roots",
    "certify_dominance",
    "spectral_abscissa",
    "scaled_residual",
]

DILATE = 1e-6
MAX_DILATIONS = 5
ZERO_REL = 1e-13        # |Delta| / term scale below this counts as a boundary hit
CLUSTER_REL = 1e-6      # cell diameter at which a multi-root cell is a cluster
# multi-root cells this small whose splits disagree are clusters as well
# (rounding noise in Delta dominates near a multiple root)
CLUSTER_FALLBACK_REL = 1e-3
DEDUPE = 1e-7
MAX_DEPTH = 80
MAX_REFINE = 80
# real roots sit strictly inside windows whose lower edge is Im = 0
REAL_AXIS_MARGIN = 1e-6


class SpectrumSolverError(RuntimeError):
    """Numerical failure of the root localiser."""


class RootOnBoundaryError(SpectrumSolverError):
    def __init__(self, rect, msg="root on boundary"):
        super().__init__(f"{msg}: {rect}")
        self.rect = rect


class MaxDepthError(SpectrumSolverError):
    def __init__(self, cell):
        super().__init__(f"max subdivision depth exceeded in cell {cell}")
        self.cell = cell


@dataclass(frozen=True)
class Rectangle:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        vals = (self.re_min, self.re_max, self.im_min, self.im_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite rectangle {vals}")
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError(f"degenerate rectangle {vals}")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def diameter(self) -> float:
        return math.hypot(self.re_max - self.re_min, self.im_max - self.im_min)

    def dilate(self, eps: float) -> "Rectangle":
        return Rectangle(self.re_min - eps, self.re_max + eps,
                         self.im_min - eps, self.im_max + eps)

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (self.re_min - slack <= z.real <= self.re_max + slack
                and self.im_min - slack <= z.imag <= self.im_max + slack)

    def conjugate_symmetric(self) -> bool:
        return self.im_min == -self.im_max

    def as_tuple(self):
        return (self.re_min, self.re_max, self.im_min, self.im_max)


@dataclass
class SpectrumReport:
    """Roots sorted by (re desc, im asc) with scaled residuals."""

    roots: list
    residuals: list
    window: Rectangle
    count_by_argument_principle: int


@dataclass
class DominanceCertificate:
    s1: float
    window: Rectangle
    chain_abscissa: float
    verdict: str
    witnesses: list = field(default_factory=list)


def scaled_residual(qp: NeutralQuasiPoly, z: complex) -> float:
    """|Delta(z)| divided by the magnitude of its summands."""
    return float(abs(complex(qp(z))) / qp.term_scale(z))


# -- argument principle ----------------------------------------------------------

class _BoundaryHit(Exception):
    pass


def _edge_phase(qp, z0, z1):
    length = abs(z1 - z0)
    n0 = max(16, int(math.ceil(4 * qp.tau * length)) + 1)
    n0 = min(n0, 200_000)
    t = np.linspace(0.0, 1.0, n0)
    zs = z0 + t * (z1 - z0)
    f = qp(zs)
    df = qp.deriv(zs)
    floor = 1e-15 * (1.0 + max(abs(z0), abs(z1)))
    for _ in range(MAX_REFINE):
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(df))):
            raise SpectrumSolverError("overflow evaluating Delta on the contour")
        if np.any(np.abs(f) <= ZERO_REL * qp.term_scale(zs)):
            raise _BoundaryHit
        d = np.angle(f[1:] / f[:-1])
        # |f/f'| estimates the distance to the nearest root; a segment longer
        # than both estimates together may hide a pair of sign changes
        with np.errstate(divide="ignore"):
            reach = np.abs(f) / np.abs(df)
        seg = np.abs(zs[1:] - zs[:-1])
        bad = (np.abs(d) >= math.pi / 2) | (seg > reach[1:] + reach[:-1])
        if not bad.any():
            return float(d.sum())
        idx = np.flatnonzero(bad)
        if np.min(seg[idx]) < floor:
            raise _BoundaryHit
        mid = 0.5 * (zs[idx] + zs[idx + 1])
        zs = np.insert(zs, idx + 1, mid)
        f = np.insert(f, idx + 1, qp(mid))
        df = np.insert(df, idx + 1, qp.deriv(mid))
    raise _BoundaryHit


def _winding(qp, rect: Rectangle) -> int:
    c = [complex(rect.re_min, rect.im_min), complex(rect.re_max, rect.im_min),
         complex(rect.re_max, rect.im_max), complex(rect.re_min, rect.im_max)]
    total = sum(_edge_phase(qp, c[i], c[(i + 1) % 4]) for i in range(4))
    w = total / (2 * math.pi)
    n = int(round(w))
    if abs(w - n) > 1e-3 or n < 0:
        raise SpectrumSolverError(f"non-integer winding {w!r} on {rect}")
    return n


def _count_exact(qp, rect):
    """Winding number without dilation; raises _BoundaryHit."""
    return _winding(qp, rect)


def count_roots(qp: NeutralQuasiPoly, rect: Rectangle) -> int:
    """Number of roots of Delta inside ``rect`` (with multiplicity).

    If a root lies on (or numerically at) the boundary the rectangle is
    dilated by 1e-6 and retried, at most five times.
    """
    return _count_with_dilation(qp, rect)[0]


def _count_with_dilation(qp, rect):
    r = rect
    for _ in range(MAX_DILATIONS + 1):
        try:
            return _count_exact(qp, r), r
        except _BoundaryHit:
            r = r.dilate(DILATE)
    raise RootOnBoundaryError(rect)


# -- localisation ------------------------------------------------------------------

def _newton(qp, z, mult=1, maxit=60):
    for _ in range(maxit):
        f = complex(qp(z))
        if f == 0:
            return z
        df = complex(qp.deriv(z))
        if df == 0 or not cmath.isfinite(f):
            return None
        step = mult * f / df
        z = z - step
        if not cmath.isfinite(z):
            return None
        if abs(step) <= 4e-16 * max(1.0, abs(z)):
            break
    return z


def _split_fracs(attempt):
    # deterministic offsets from the midpoint so splits avoid symmetric roots
    base = (0.5, 0.4871, 0.5263, 0.4519, 0.5618, 0.4137)
    f = base[attempt % len(base)]
    return f, 1.0 - f + 0.0123 * (attempt % 3)


def _children(rect, fx, fy):
    xm = rect.re_min + fx * (rect.re_max - rect.re_min)
    ym = rect.im_min + fy * (rect.im_max - rect.im_min)
    if ym == 0.0:
        # never cut along the real axis, where real roots sit
        ym = rect.im_min + (fy + 0.0123) * (rect.im_max - rect.im_min)
    return [Rectangle(rect.re_min, xm, rect.im_min, ym),
            Rectangle(xm, rect.re_max, rect.im_min, ym),
            Rectangle(rect.re_min, xm, ym, rect.im_max),
            Rectangle(xm, rect.re_max, ym, rect.im_max)]


def _isolate(qp, rect, n, depth, out):
    if n == 0:
        return
    scale = 1.0 + abs(rect.center)
    if n == 1:
        z = _newton(qp, rect.center)
        if z is not None and rect.contains(z, slack=1e-12 * scale):
            out.append((z, 1))
            return
    elif rect.diameter < CLUSTER_REL * scale:
        _cluster(qp, rect, n, out)
        return
    if depth >= MAX_DEPTH:
        raise MaxDepthError(rect)
    for attempt in range(12):
        fx, fy = _split_fracs(attempt)
        kids = _children(rect, fx, fy)
        try:
            counts = [_count_exact(qp, k) for k in kids]
        except _BoundaryHit:
            continue
        if sum(counts) == n:
            break
    else:
        if n >= 2 and rect.diameter < CLUSTER_FALLBACK_REL * scale:
            _cluster(qp, rect, n, out)
            return
        raise SpectrumSolverError(f"could not split cell {rect} consistently")
    for k, c in zip(kids, counts):
        _isolate(qp, k, c, depth + 1, out)


def _cluster(qp, rect, n, out):
    # n roots too close to separate: multiplicity-n Newton, reported n times
    z = _newton(qp, rect.center, mult=n)
    if z is None or not rect.contains(z, slack=rect.diameter):
        z = rect.center
    if rect.im_min <= 0.0 <= rect.im_max and abs(z.imag) <= rect.diameter:
        # real coefficients: a cluster straddling the axis is centred on it
        z = complex(z.real, 0.0)
        x = _double_real_root(qp, z.real) if n == 2 else None
        if x is not None and abs(x - z.real) <= rect.diameter:
            z = complex(x, 0.0)
    out.extend([(z, n)] * n)


def _double_real_root(qp, x, maxit=60):
    # a double root of Delta is a simple root of Delta': Newton on Delta'
    for _ in range(maxit):
        e = math.exp(-qp.tau * x)
        lin = qp.alpha * x + qp.beta
        d1 = 1.0 + e * (qp.alpha - qp.tau * lin)
        d2 = qp.tau * e * (qp.tau * lin - 2.0 * qp.alpha)
        if d2 == 0 or not math.isfinite(d1):
            return None
        step = d1 / d2
        x -= step
        if abs(step) <= 4e-16 * max(1.0, abs(x)):
            break
    return x


def _merge_axis_pairs(qp, roots):
    # a real double root perturbed by rounding comes back as a conjugate pair
    # or two nearby reals at distance ~sqrt(eps); fold them onto the root
    out = list(roots)
    for i, z in enumerate(out):
        tol = CLUSTER_REL * (1.0 + abs(z.real))
        if z.imag < 0 or z.imag >= tol:
            continue
        j = next((k for k, w in enumerate(out)
                  if k != i and abs(w - z.conjugate()) <= tol), None)
        if j is None:
            continue
        x = _double_real_root(qp, z.real)
        if (x is None or abs(x - z) > tol
                or scaled_residual(qp, complex(x, 0.0)) > 1e-10):
            continue
        out[i] = out[j] = complex(x, 0.0)
    return out


def _canonical(roots):
    return sorted(roots, key=lambda z: (-round(z.real, 12), z.imag))


def find_roots(qp: NeutralQuasiPoly, rect: Rectangle, dilate: bool = True) -> SpectrumReport:
    """Locate every root of Delta in ``rect``.

    The window is quadrisected until each cell holds at most one root (or
    shrinks below 1e-6 relative diameter, in which case the cell is a
    multiple-root cluster refined by the multiplicity-aware Newton step),
    then each root is polished by Newton's method. With ``dilate=False`` a
    root on the boundary raises :class:`RootOnBoundaryError` at once.
    """
    if dilate:
        n, used = _count_with_dilation(qp, rect)
    else:
        try:
            n, used = _count_exact(qp, rect), rect
        except _BoundaryHit:
            raise RootOnBoundaryError(rect) from None
    raw = []
    _isolate(qp, used, n, 0, raw)
    roots = []
    for z, _ in raw:
        if abs(z.imag) <= 1e-13 * (1.0 + abs(z.real)):
            z = complex(z.real, 0.0)
        roots.append(z)
    roots = _canonical(_merge_axis_pairs(qp, roots))
    if len(roots) != n:
        raise SpectrumSolverError(f"found {len(roots)} roots but counted {n} in {used}")
    res = [scaled_residual(qp, z) for z in roots]
    return SpectrumReport(roots, res, used, n)


def _distinct(roots, tol=DEDUPE):
    out = []
    for z in roots:
        if all(abs(z - w) > tol * (1.0 + abs(w)) for w in out):
            out.append(z)
    return out


# -- certificates ---------------------------------------------------------------------

def _axis_margin(qp):
    return REAL_AXIS_MARGIN * min(1.0, 1.0 / qp.tau)


def certify_dominance(qp: NeutralQuasiPoly, s1: float,
                      im_limit: float | None = None) -> DominanceCertificate:
    """Check that the real root ``s1`` is (strictly) dominant.

    Searches [s1 + off, s1 + max(5, 10/tau)] x [0, im_limit]; by conjugate
    symmetry the lower half plane adds nothing. The verdict is windowed:
    roots above ``im_limit`` are covered only through the chain abscissa
    ln|alpha|/tau.
    """
    tau = qp.tau
    if im_limit is None:
        im_limit = 20 * math.pi / tau
    if im_limit < 4 * math.pi / tau - 1e-12:
        raise ValueError("im_limit must be at least 4*pi/tau")
    h = _axis_margin(qp)
    width = max(5.0, 10.0 / tau)
    # the left edge must clear s1 by enough that |Delta| there is resolvable;
    # the window is never dilated, which could swallow s1 itself
    off = 1e-9
    while off < 1e-4 and scaled_residual(qp, s1 + off) < 1e-10:
        off *= 10.0
    for attempt in range(MAX_DILATIONS + 1):
        grow = attempt * DILATE
        rect = Rectangle(s1 + off, s1 + width + grow, -h - grow, im_limit + grow)
        try:
            report = find_roots(qp, rect, dilate=False)
            break
        except RootOnBoundaryError:
            off *= 10.0
    else:
        raise RootOnBoundaryError(rect)
    chain = qp.chain_abscissa

    def closed(ws):
        ws = _distinct(ws)
        full = ws + [w.conjugate() for w in ws if w.imag != 0.0]
        return _canonical(_distinct(full))

    right = [z for z in report.roots if z.real > s1 + 1e-7]
    if right:
        return DominanceCertificate(s1, rect, chain, "refuted", closed(right))
    if report.roots:
        return DominanceCertificate(s1, rect, chain, "certified_boundary",
                                    closed(report.roots))
    if chain < s1 - 1e-9:
        return DominanceCertificate(s1, rect, chain, "certified_strict", [])
    if chain <= s1 + 1e-9:
        thin = Rectangle(s1 - 1e-6, s1 + off, h, im_limit)
        try:
            ws = find_roots(qp, thin).roots
        except SpectrumSolverError:
            ws = []
        return DominanceCertificate(s1, rect, chain, "certified_boundary", closed(ws))
    # chain lies right of the window: follow the asymptotic chain roots
    ws = []
    for k in range(1, 6):
        z = _newton(qp, complex(chain, (2 * k - 1) * math.pi / tau))
        if z is not None and z.real > s1 + 1e-7 and scaled_residual(qp, z) < 1e-12:
            ws.append(z)
    return DominanceCertificate(s1, rect, chain, "refuted", closed(ws))


def spectral_abscissa(qp: NeutralQuasiPoly, im_limit: float | None = None) -> float:
    """Window-limited estimate of the spectral abscissa.

    max(max Re over roots in [-50/tau, 50/tau] x [0, im_limit], ln|alpha|/tau).
    """
    tau = qp.tau
    if im_limit is None:
        im_limit = 20 * math.pi / tau
    if im_limit < 4 * math.pi / tau - 1e-12:
        raise ValueError("im_limit must be at least 4*pi/tau")
    h = _axis_margin(qp)
    rect = Rectangle(-50.0 / tau, 50.0 / tau, -h, im_limit)
    report = find_roots(qp, rect)
    best = max((z.real for z in report.roots), default=-math.inf)
    return max(best, qp.chain_abscissa)
