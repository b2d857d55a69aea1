"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import math
import time

import mpmath as mp
import numpy as np
import pytest

from crrid.core import gcrrid_W, gcrrid_v_boundary
from crrid.placement import (
    RootPair,
    RootTriple,
    assign_three,
    assign_two_exact,
    classify_two_root,
    coeff_a,
    design_p,
    design_pd,
    exp_estimate,
    region_boundaries,
    remaining_spectrum_three,
    tau_star_three,
)
from crrid.simulate import (
    History,
    PlantSpec,
    estimate_decay_rate,
    integrate_hopfield,
    integrate_linear_neutral,
)
from crrid.spectrum import Rectangle, certify_dominance, find_roots

SQ5 = math.sqrt(5)

PD_CASES = {
    "66": ((2, 1), RootTriple(-5, -6, -7)),
    "68": ((1, 1), RootTriple(-3, -4, -6)),
    "70": ((1, 2), RootTriple(-7, -8, -9)),
}
P_CASES = {"(-7,-8)": RootPair(-7, -8), "(-7,-9)": RootPair(-7, -9), "(-7,-7)": RootPair(-7, -7)}


def all_designs():
    out = {f"PD{k}": design_pd(*plant, roots) for k, (plant, roots) in PD_CASES.items()}
    out.update({f"P{k}": design_p(1, 2, pair) for k, pair in P_CASES.items()})
    return out


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def rel(x, ref):
    return abs(x - ref) / abs(ref)


def test_c01_design66_gains_and_runtime(report):
    roots = RootTriple(-5, -6, -7)
    d = design_pd(2, 1, roots)
    best = math.inf
    for _ in range(7):
        t0 = time.perf_counter()
        design_pd(2, 1, roots)
        best = min(best, time.perf_counter() - t0)
    kd = (2 / 3) ** 6
    errs = (rel(d.tau, math.log(1.5)), rel(d.kd, kd), rel(d.kp, 11 * kd))
    ok = max(errs) <= 1e-12 and best < 0.01
    report(1, ok, f"max rel err {max(errs):.2e}, runtime {best * 1e3:.2f} ms")
    assert max(errs) <= 1e-12
    assert best < 0.01


def test_c02_design68_gains(report):
    d = design_pd(1, 1, RootTriple(-3, -4, -6))
    errs = (rel(d.tau, math.log((1 + SQ5) / 2)), rel(d.kd, -20 + 9 * SQ5),
            rel(d.kp, -66 + 30 * SQ5))
    ok = max(errs) <= 1e-10
    report(2, ok, f"max rel err {max(errs):.2e}")
    assert ok


def test_c03_design70_rounding(report):
    d = design_pd(1, 2, RootTriple(-7, -8, -9))
    got = (round(d.tau, 2), round(d.kd, 2), round(d.kp, 2))
    ok = got == (0.22, 0.17, 2.85)
    report(3, ok, f"tau={d.tau:.4f} kd={d.kd:.4f} kp={d.kp:.4f} -> {got}")
    assert ok


def test_c04_p_designs_and_comparison(report):
    pd = design_pd(1, 2, RootTriple(-7, -8, -9))
    expect = {"(-7,-8)": (math.log(9 / 8), 3.508, 0.12, 3.51),
              "(-7,-9)": (math.log(SQ5 / 2), 3.663, 0.11, 3.66),
              "(-7,-7)": (0.125, 3.335, 0.125, 3.33)}
    lines, ok = [], True
    for key, pair in P_CASES.items():
        d = design_p(1, 2, pair)
        tau, kp, r_tau, r_kp = expect[key]
        ndig = 3 if key == "(-7,-7)" else 2
        good = (rel(d.tau, tau) < 1e-12 and abs(d.kp - kp) < 1e-3
                and round(d.tau, ndig) == r_tau and round(d.kp, 2) == r_kp
                and pd.tau > d.tau and d.kp > math.hypot(pd.kp, pd.kd))
        ok &= good
        lines.append(f"{key}: tau={d.tau:.4f} kp={d.kp:.4f}")
    report(4, ok, "; ".join(lines))
    assert ok


def test_c05_dominance_certification(report):
    lines, ok = [], True
    for name, d in all_designs().items():
        qp = d.quasipoly
        lim = 20 * math.pi / qp.tau
        t0 = time.perf_counter()
        cert = certify_dominance(qp, d.s1, lim)
        # wide enough to reach the retarded chains of the P designs
        rep = find_roots(qp, Rectangle(d.s1 - 60, d.s1 + 5, -lim, lim))
        dt = time.perf_counter() - t0
        right = [z for z in rep.roots if z.real > d.s1 + 1e-9]
        nonreal = [z for z in rep.roots if z.imag != 0]
        gap = min((abs(z.imag) for z in nonreal), default=math.inf)
        good = (cert.verdict == "certified_strict" and not right
                and cert.chain_abscissa < d.s1
                and gap >= 2 * math.pi / qp.tau - 1e-6 and dt < 5)
        ok &= good
        lines.append(f"{name} {cert.verdict} gap*tau/pi={gap * qp.tau / math.pi:.3f} "
                     f"{dt:.2f}s")
    report(5, ok, "; ".join(lines))
    assert ok


def test_c06_remaining_spectrum_cross_check(report):
    worst_re, worst_tan, ok = 0.0, 0.0, True
    for key in ("66", "70"):
        plant, roots = PD_CASES[key]
        d = design_pd(*plant, roots)
        qp, (s1, s2, s3) = d.quasipoly, d.assigned_roots.as_tuple()
        sc = remaining_spectrum_three(d.assigned_roots, qp.tau, 3)
        lim = 6 * math.pi / qp.tau
        rep = find_roots(qp, Rectangle(s3 - 5, s1 + 1, -lim, lim))
        nonreal = [z for z in rep.roots if z.imag != 0]
        expect = sum(2 for w in sc.omegas if w <= 6 * math.pi)
        ok &= len(nonreal) == expect > 0
        for z in nonreal:
            w = abs(z.imag) * qp.tau
            worst_re = max(worst_re, abs(z.real - s2))
            worst_tan = max(worst_tan, abs(math.tan(w / 2) - w / sc.xi))
    s = -1.0
    sc = remaining_spectrum_three(RootTriple(s, s - 1e-4, s - 2e-4), 1.0, 1)
    w1 = sc.omegas[0]
    ok &= worst_re <= 1e-6 and worst_tan <= 1e-8 and abs(w1 - 8.98682) <= 1e-3
    report(6, ok, f"max |Re - s2| {worst_re:.1e}, max tan residual {worst_tan:.1e}, "
                  f"triple-limit omega1 {w1:.6f}")
    assert ok


def test_c07_tau_star_trichotomy(report):
    rng = np.random.default_rng(7)
    n_eq, worst, ok = 0, 0.0, True
    for i in range(100):
        s1 = -rng.uniform(0.1, 8.0)
        g1 = rng.uniform(0.05, 4.0)
        g2 = g1 if i % 3 == 0 else rng.uniform(0.05, 4.0)
        roots = RootTriple(s1, s1 - g1, s1 - g1 - g2)
        ts = tau_star_three(roots, method="bracket")
        if roots.equidistributed:
            n_eq += 1
            err = rel(ts, tau_star_three(roots, method="closed"))
            worst = max(worst, err)
            ok &= err <= 1e-10
        below = coeff_a(roots, ts - 0.01) if ts > 0.01 else coeff_a(roots, ts / 2)
        ok &= below < 0 < coeff_a(roots, ts + 0.01)
    report(7, ok, f"100 triples, {n_eq} equidistributed, max rel err {worst:.1e}")
    assert ok


def _mp_sign(pair, a, tau, t):
    s1, s2 = mp.mpf(pair.s1), mp.mpf(pair.s2)
    a, tau = mp.mpf(a), mp.mpf(tau)
    e1, e2 = mp.exp(tau * s1), mp.exp(tau * s2)
    alpha = (-(a + s1) * e1 + (a + s2) * e2) / (s1 - s2)
    beta = -alpha * s1 - e1 * (a + s1)
    if t == -mp.inf:
        return int(mp.sign(-alpha)) if alpha != 0 else int(mp.sign(beta))
    t = mp.mpf(t)
    return int(mp.sign((t + a) * mp.exp(tau * t) + alpha * t + beta))


def _oracle_label(pair, a, tau):
    # e^{tau t} Delta(t) has a single inflection point, so at most three real
    # roots: a sign change on an interval means the extra root sits there
    s1, s2 = pair.s1, pair.s2
    d = mp.mpf("1e-25")
    with mp.workdps(60):
        left = _mp_sign(pair, a, tau, -mp.inf) != _mp_sign(pair, a, tau, mp.mpf(s2) - d)
        mid = _mp_sign(pair, a, tau, mp.mpf(s2) + d) != _mp_sign(pair, a, tau, mp.mpf(s1) - d)
        right = _mp_sign(pair, a, tau, mp.mpf(s1) + d) != 1
    hits = [lab for lab, h in (("R3", left), ("R2", mid), ("R1", right)) if h]
    assert len(hits) <= 1
    return hits[0] if hits else None


def _float_scan(qp, lo, hi, avoid, n=20001):
    t = np.linspace(lo, hi, n)
    g = (t + qp.a) * np.exp(qp.tau * np.minimum(t, 0)) + np.exp(-qp.tau * np.maximum(t, 0)) * (
        qp.alpha * t + qp.beta)
    idx = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    mids = 0.5 * (t[idx] + t[idx + 1])
    return [x for x in mids if all(abs(x - s) > 2 * (t[1] - t[0]) for s in avoid)]


def test_c08_region_oracle(report):
    rng = np.random.default_rng(8)
    labels = ("R1", "R2", "R3", "R4", "R5")
    done = dict.fromkeys(labels, 0)
    mismatches = []
    while min(done.values()) < 200:
        want = labels[int(np.argmin([done[k] for k in labels]))]
        s1 = rng.uniform(-3, 2)
        gap = rng.uniform(0.1, 3)
        tau = rng.uniform(0.1, 2)
        p1, p2, p3, p4 = region_boundaries(gap, tau)
        lam = {"R1": p1 - rng.uniform(0, 3), "R2": rng.uniform(p1, p2),
               "R3": rng.uniform(p2, p3), "R4": rng.uniform(p3, p4),
               "R5": p4 + rng.uniform(0, 3)}[want]
        pair = RootPair(s1, s1 - gap)
        a = lam * gap - s1
        lab = classify_two_root(pair, a, tau)
        if min(abs(lab.lam3 - p) for p in (p1, p2, p3, p4)) <= 1e-9:
            continue
        oracle = _oracle_label(pair, a, tau)
        qp = assign_two_exact(pair, a, tau)
        scan = _float_scan(qp, pair.s2 - 100 / tau - 100, s1 + 100 / tau + 100,
                           (s1, pair.s2))
        if oracle is None:
            assert scan == []
            strict = certify_dominance(qp, s1).verdict == "certified_strict"
            oracle = "R4" if strict else "R5"
        elif scan:
            x = scan[0]
            where = "R1" if x > s1 else ("R2" if x > pair.s2 else "R3")
            assert len(scan) == 1 and where == oracle
        done[want] += 1
        if oracle != lab.label or oracle != want:
            mismatches.append((s1, gap, tau, lam, want, lab.label, oracle))
    ok = not mismatches
    report(8, ok, f"1000 samples {dict(done)}, {len(mismatches)} disagreements")
    assert ok, mismatches[:5]


def test_c09_beyond_fvl_witnesses(report):
    lines, ok = [], True
    for u in (0.5, 1.0, 2.0):
        v = gcrrid_v_boundary(u) - 0.05
        roots = RootTriple(v, v - u, v - 2 * u)
        W = gcrrid_W(u, v)
        cert = certify_dominance(assign_three(roots, 1.0), v)
        good = W >= 1 and cert.verdict == "certified_strict"
        ok &= good
        lines.append(f"u={u}: W={W:.4f} {cert.verdict}")
    report(9, ok, "; ".join(lines))
    assert ok


def test_c10_closed_loop_simulation(report):
    t0 = time.perf_counter()
    plant = PlantSpec(1, 2)
    d = design_pd(1, 2, RootTriple(-7, -8, -9))
    hist = History.from_function(lambda t: 1 + np.sin(t), np.cos, tau=d.tau)
    tr = integrate_hopfield(plant, d, hist, 6.0, d.tau / 64)
    rate = estimate_decay_rate(tr, 1, 4)
    free = integrate_hopfield(plant, None, History.constant(1.0, 1.0), 30.0, 1 / 32)
    dt = time.perf_counter() - t0
    ok = abs(rate + 7) <= 0.35 and abs(free.values[-1] - 1.91501) <= 1e-3 and dt < 2
    report(10, ok, f"fitted rate {rate:.4f}, uncontrolled y(30)={free.values[-1]:.6f}, "
                   f"{dt:.2f}s")
    assert ok


def _random_history(rng, tau):
    n = 4
    c = rng.normal(size=n)
    s = rng.normal(size=n)
    w = rng.uniform(0.2, 6.0) * np.arange(n)

    def f(t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.sum(c * np.cos(w * t) + s * np.sin(w * t), axis=-1)

    def df(t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.sum(w * (s * np.cos(w * t) - c * np.sin(w * t)), axis=-1)

    return History.from_function(f, df, tau=tau)


def test_c11_exponential_estimate(report):
    rng = np.random.default_rng(11)
    lines, ok = [], True
    for name, d in all_designs().items():
        qp = d.quasipoly
        if certify_dominance(qp, d.s1).verdict != "certified_strict":
            continue
        est = exp_estimate(qp, d.assigned_roots, 0.1)
        worst = 0.0
        for _ in range(20):
            hist = _random_history(rng, qp.tau)
            tr = integrate_linear_neutral(qp, hist, 5.0, qp.tau / 64)
            bound = est.k * np.exp((d.s1 + 0.1) * tr.times) * hist.sup_norm
            worst = max(worst, float(np.max(np.abs(tr.values) / bound)))
        good = est.k >= 1 and worst <= 1.0
        ok &= good
        lines.append(f"{name} k={est.k:.4g} max|y|/bound={worst:.3f}")
    report(11, ok, "; ".join(lines))
    assert ok


def test_c12_integrator_order(report):
    d = design_pd(2, 1, RootTriple(-5, -6, -7))
    qp = d.quasipoly
    hist = History.from_function(lambda t: 1 + np.sin(t), np.cos, tau=qp.tau)
    ref = integrate_linear_neutral(qp, hist, qp.tau, qp.tau / 2048).values[-1]
    errs = [abs(integrate_linear_neutral(qp, hist, qp.tau, qp.tau / m).values[-1] - ref)
            for m in (16, 32, 64)]
    orders = [math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])]
    p = orders[0]
    ok = 3.5 <= p <= 4.5
    report(12, ok, f"measured order {p:.3f} (next halving {orders[1]:.3f})")
    assert ok
