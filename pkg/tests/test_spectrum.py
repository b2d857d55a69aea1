import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crrid.core import NeutralQuasiPoly, eval_delta
from crrid.placement import (
    RootPair,
    RootTriple,
    assign_three,
    assign_two_exact,
    classify_two_root,
    design_pd,
    remaining_spectrum_three,
)
from crrid.spectrum import (
    Rectangle,
    RootOnBoundaryError,
    certify_dominance,
    count_roots,
    find_roots,
    scaled_residual,
    spectral_abscissa,
)

D66 = design_pd(2, 1, RootTriple(-5, -6, -7))
D68 = design_pd(1, 1, RootTriple(-3, -4, -6))
D70 = design_pd(1, 2, RootTriple(-7, -8, -9))


def test_rectangle_validation():
    with pytest.raises(ValueError):
        Rectangle(1, 0, 0, 1)
    with pytest.raises(ValueError):
        Rectangle(0, 1, 0, float("inf"))
    r = Rectangle(-1, 1, -2, 2)
    assert r.conjugate_symmetric()
    assert r.dilate(1.0).as_tuple() == (-2, 2, -3, 3)


def test_count_isolated_root():
    assert count_roots(D66.quasipoly, Rectangle(-5.5, -4.5, -1, 1)) == 1


def test_count_three_real_roots_in_gap_strip():
    qp = D66.quasipoly
    band = 2 * math.pi / qp.tau - 1e-3
    assert count_roots(qp, Rectangle(-20, 5, -band, band)) == 3


@pytest.mark.parametrize("design", [D66, D68, D70])
@pytest.mark.parametrize("y0,H", [(0.0, 60.0), (13.0, 90.0), (-40.0, 200.0)])
def test_strip_count_bound(design, y0, H):
    qp = design.quasipoly
    # every root lies right of -40/tau for these designs
    n = count_roots(qp, Rectangle(-60 / qp.tau, 30, y0, y0 + H))
    expect = qp.tau * H / (2 * math.pi)
    assert expect - 3 <= n <= expect + 3


def test_find_assigned_roots():
    rep = find_roots(D66.quasipoly, Rectangle(-10, 1, -1, 1))
    assert len(rep.roots) == 3 == rep.count_by_argument_principle
    for z, s in zip(rep.roots, (-5, -6, -7)):
        assert abs(z - s) < 1e-9
    assert all(r < 1e-12 for r in rep.residuals)


def test_find_equidistributed_chain_pair():
    qp = D66.quasipoly
    sc = remaining_spectrum_three(D66.assigned_roots, qp.tau, 1)
    w = sc.omegas[0] / qp.tau
    rep = find_roots(qp, Rectangle(-6.5, -5.5, -w - 1, w + 1))
    nonreal = [z for z in rep.roots if z.imag != 0]
    assert len(nonreal) == 2
    for z in nonreal:
        assert abs(z.real + 6) < 1e-8
        assert abs(abs(z.imag) - w) < 1e-8


def test_pure_ode_single_root():
    qp = NeutralQuasiPoly(3.0, 0.0, 0.0, 1.0)
    rep = find_roots(qp, Rectangle(-10, 10, -10, 10))
    assert rep.roots == [complex(-3, 0)]


def test_sorted_canonically_and_conjugate_closed():
    qp = D66.quasipoly
    rep = find_roots(qp, Rectangle(-10, 1, -60, 60))
    keys = [(-round(z.real, 12), z.imag) for z in rep.roots]
    assert keys == sorted(keys)
    for z in rep.roots:
        assert min(abs(z.conjugate() - w) for w in rep.roots) < 1e-9
        assert abs(eval_delta(qp, z)) < 1e-9 * (1 + abs(z))


def test_root_on_boundary_is_recovered_by_dilation():
    qp = NeutralQuasiPoly(3.0, 0.0, 0.0, 1.0)
    # the root -3 sits on the left edge; dilation pulls it inside
    assert count_roots(qp, Rectangle(-3.0, 0.0, -1.0, 1.0)) == 1


def test_root_on_boundary_error_when_retries_exhausted():
    from crrid import spectrum as sp

    qp = NeutralQuasiPoly(3.0, 0.0, 0.0, 1.0)
    old = sp.DILATE
    sp.DILATE = 0.0
    try:
        with pytest.raises(RootOnBoundaryError, match="root on boundary"):
            count_roots(qp, Rectangle(-3.0, 0.0, -1.0, 1.0))
    finally:
        sp.DILATE = old


def test_double_root_cluster():
    # the MID P design: s1 = -7 is a double root
    from crrid.placement import design_p

    qp = design_p(1, 2, RootPair(-7, -7)).quasipoly
    rep = find_roots(qp, Rectangle(-7.5, -6.5, -1, 1))
    assert rep.count_by_argument_principle == 2
    assert len(rep.roots) == 2
    for z in rep.roots:
        assert abs(z + 7) < 1e-6


def test_close_real_roots_on_coarse_edge_not_missed():
    # -7 and -8 fall inside one coarse sample interval of the bottom edge
    from crrid.placement import design_p

    qp = design_p(1, 2, RootPair(-7, -8)).quasipoly
    with pytest.raises(RootOnBoundaryError):
        find_roots(qp, Rectangle(-34.5, -2, 0.0, 500.0), dilate=False)
    assert count_roots(qp, Rectangle(-34.5, -2, -1e-3, 1e-3)) == 2


def test_symmetric_window_split_avoids_axis():
    from crrid.placement import design_p

    qp = design_p(1, 2, RootPair(-7, -8)).quasipoly
    lim = 20 * math.pi / qp.tau
    rep = find_roots(qp, Rectangle(-67, -2, -lim, lim))
    assert len(rep.roots) == rep.count_by_argument_principle
    assert sum(1 for z in rep.roots if z.imag == 0) == 2


def test_count_find_consistency_and_monotonicity():
    qp = D70.quasipoly
    prev = 0
    for im in (20.0, 45.0, 80.0, 140.0):
        r = Rectangle(-12, 2, -im, im)
        n = count_roots(qp, r)
        assert len(find_roots(qp, r).roots) == n
        assert n >= prev
        prev = n


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-0.9, 0.9), st.floats(-3, 3), st.floats(0.2, 2))
def test_random_quasipolynomials_consistent(a, alpha, beta, tau):
    qp = NeutralQuasiPoly(a, alpha, beta, tau)
    rect = Rectangle(-8.1, 4.3, -15.7, 15.7)
    rep = find_roots(qp, rect)
    assert len(rep.roots) == rep.count_by_argument_principle
    for z, res in zip(rep.roots, rep.residuals):
        assert res < 1e-9 * (1 + abs(z))
        assert min(abs(z.conjugate() - w) for w in rep.roots) < 1e-7
    big = Rectangle(-9.1, 5.3, -18.7, 18.7)
    assert count_roots(qp, big) >= rep.count_by_argument_principle


def test_determinism():
    qp = D68.quasipoly
    r = Rectangle(-10, 1, -50, 50)
    a = find_roots(qp, r)
    b = find_roots(qp, r)
    assert a.roots == b.roots and a.residuals == b.residuals


@pytest.mark.parametrize("design", [D66, D68, D70])
def test_certify_designs_strict(design):
    qp = design.quasipoly
    cert = certify_dominance(qp, design.s1, 20 * math.pi / qp.tau)
    assert cert.verdict == "certified_strict"
    assert cert.chain_abscissa < design.s1


def test_certify_boundary_two_root():
    s1, s2, tau = -1.0, -2.0, 0.8
    qp = assign_two_exact(RootPair(s1, s2), (s1 - s2) - s1, tau)
    cert = certify_dominance(qp, s1)
    assert cert.verdict == "certified_boundary"
    first = [w for w in cert.witnesses if abs(abs(w.imag) - 2 * math.pi / tau) < 1e-6]
    assert len(first) == 2
    for w in first:
        assert abs(w.real - s1) < 1e-7


def test_certify_refuted_region_R1():
    pair = RootPair(-1, -2)
    a = -2 * 1.0 + 1.0  # Lambda3 = -2
    lab = classify_two_root(pair, a, 1.0)
    assert lab.label == "R1"
    qp = assign_two_exact(pair, a, 1.0)
    cert = certify_dominance(qp, pair.s1)
    assert cert.verdict == "refuted"
    assert cert.witnesses
    for w in cert.witnesses:
        assert w.real > pair.s1
        assert scaled_residual(qp, w) < 1e-9
    real = [w for w in cert.witnesses if w.imag == 0]
    assert real and abs(real[0].real - lab.x) < 1e-9


def test_certify_rejects_small_im_limit():
    with pytest.raises(ValueError):
        certify_dominance(D66.quasipoly, -5, 1.0)


def test_frequency_gap_three_roots():
    for d in (D66, D68, D70):
        qp = d.quasipoly
        rep = find_roots(qp, Rectangle(-20, 2, -20 * math.pi / qp.tau, 20 * math.pi / qp.tau))
        for z in rep.roots:
            if z.imag != 0:
                assert abs(z.imag) >= 2 * math.pi / qp.tau - 1e-6


@pytest.mark.parametrize("design,expect", [(D66, -5.0), (D70, -7.0)])
def test_spectral_abscissa_designs(design, expect):
    assert spectral_abscissa(design.quasipoly) == pytest.approx(expect, abs=1e-8)


def test_spectral_abscissa_pure_ode():
    assert spectral_abscissa(NeutralQuasiPoly(3.0, 0.0, 0.0, 1.0)) == pytest.approx(-3.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(-4, 1), st.floats(0.1, 2), st.floats(0.1, 2), st.floats(0.1, 1.5))
def test_three_root_designs_always_certified(s1, g1, g2, tau):
    roots = RootTriple(s1, s1 - g1, s1 - g1 - g2)
    qp = assign_three(roots, tau)
    cert = certify_dominance(qp, s1)
    assert cert.verdict == "certified_strict"
