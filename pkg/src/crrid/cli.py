"""Command-line interface: ``crrid <subcommand>``.

Exit codes: 0 ok / certified, 1 input error, 2 dominance refuted,
3 prescribed rate unreachable, 4 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .core import NeutralQuasiPoly, gcrrid_v_boundary
from .expr import GrammarError, parse_history
from .placement import (
    RootPair,
    RootTriple,
    UnreachableRateError,
    classify_two_root,
    design_p,
    design_pd,
    exp_estimate,
    icrrid_witness_box,
    region_boundaries,
    remaining_spectrum_three,
    tau_star_pair,
    tau_star_three,
)
from .simulate import (
    History,
    PlantSpec,
    estimate_decay_rate,
    integrate_hopfield,
)
from .spectrum import (
    Rectangle,
    SpectrumSolverError,
    certify_dominance,
    find_roots,
)

EXIT_OK, EXIT_INPUT, EXIT_REFUTED, EXIT_UNREACHABLE, EXIT_SOLVER = 0, 1, 2, 3, 4
DEFAULT_HORIZON = 6.0
STEPS_PER_DELAY = 64
DEFAULT_FIT = (1.0, 4.0)


class InputError(ValueError):
    pass


# -- serialisation ---------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(float(obj.real)), _jsonable(float(obj.imag))]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(doc) -> str:
    # json emits floats with repr, i.e. shortest round-trip form
    return json.dumps(_jsonable(doc), indent=2) + "\n"


def atomic_write(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".crrid-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, out) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _csv(header, rows, comments=()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) for x in r])
    for c in comments:
        buf.write(f"# {c}\n")
    return buf.getvalue()


# -- request parsing --------------------------------------------------------------

def _number(value, field, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"field '{field}': expected a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise InputError(f"field '{field}': must be finite")
    if positive and not x > 0:
        raise InputError(f"field '{field}': must be positive")
    return x


def _floats(text, field, count=None):
    try:
        vals = [float(p) for p in text.split(",")]
    except ValueError:
        raise InputError(f"{field}: expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) not in ((count,) if isinstance(count, int) else count):
        raise InputError(f"{field}: expected {count} values, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise InputError(f"{field}: values must be finite")
    return vals


def load_json(path: str):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def parse_request(doc) -> dict:
    """Validate a design request; a report document is accepted via its echo."""
    if isinstance(doc, dict) and "request" in doc and "plant" not in doc:
        doc = doc["request"]
    if not isinstance(doc, dict):
        raise InputError("request: expected an object")
    plant = doc.get("plant")
    if not isinstance(plant, dict):
        raise InputError("field 'plant': expected an object with nu and mu")
    nu = _number(plant.get("nu"), "plant.nu", positive=True)
    mu = _number(plant.get("mu"), "plant.mu", positive=True)
    kind = doc.get("controller", "PD")
    if kind not in ("PD", "P"):
        raise InputError(f"field 'controller': expected 'PD' or 'P', got {kind!r}")
    roots = doc.get("roots")
    if not isinstance(roots, list):
        raise InputError("field 'roots': expected a list of numbers")
    roots = [_number(r, f"roots[{i}]") for i, r in enumerate(roots)]
    if kind == "PD":
        if len(roots) != 3:
            raise InputError("field 'roots': PD control assigns exactly 3 roots")
        if not roots[0] > roots[1] > roots[2]:
            raise InputError("field 'roots': must be strictly decreasing")
    else:
        if len(roots) != 2:
            raise InputError("field 'roots': P control assigns exactly 2 roots")
        if not roots[0] >= roots[1]:
            raise InputError("field 'roots': must be decreasing (equal for a double root)")
    opts = doc.get("options", {}) or {}
    if not isinstance(opts, dict):
        raise InputError("field 'options': expected an object")
    known = {"epsilon", "im_limit", "horizon", "step", "history"}
    extra = set(opts) - known
    if extra:
        raise InputError(f"field 'options': unknown keys {sorted(extra)}")
    out_opts = {
        "epsilon": _number(opts.get("epsilon", 0.1), "options.epsilon", positive=True),
        "im_limit": None if opts.get("im_limit") is None
        else _number(opts["im_limit"], "options.im_limit", positive=True),
        "horizon": _number(opts.get("horizon", DEFAULT_HORIZON), "options.horizon", positive=True),
        "step": None if opts.get("step") is None
        else _number(opts["step"], "options.step", positive=True),
        "history": opts.get("history", "1+sin(t)"),
    }
    if out_opts["history"] is not None and not isinstance(out_opts["history"], (str, int, float)):
        raise InputError("field 'options.history': expected an expression string")
    return {"plant": {"nu": nu, "mu": mu}, "roots": roots, "controller": kind,
            "options": out_opts}


def build_design(req):
    nu, mu = req["plant"]["nu"], req["plant"]["mu"]
    if req["controller"] == "PD":
        return design_pd(nu, mu, RootTriple(*req["roots"]))
    return design_p(nu, mu, RootPair(*req["roots"]))


def make_history(spec, tau: float) -> History:
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return History.constant(float(spec), tau)
    try:
        c = float(spec)
    except (TypeError, ValueError):
        pass
    else:
        if math.isfinite(c):
            return History.constant(c, tau)
    expr = parse_history(str(spec))
    return History.from_function(expr, expr.deriv, tau=tau)


def _fit(traj, window=DEFAULT_FIT):
    t0, t1 = window[0], min(window[1], float(traj.times[-1]))
    try:
        return estimate_decay_rate(traj, t0, t1), None
    except ValueError as exc:
        return math.nan, str(exc)


def _simulate(design, plant, history, horizon, step):
    tau = design.tau if design is not None else 1.0
    h = step if step is not None else tau / STEPS_PER_DELAY
    y0 = make_history(history, tau)
    return integrate_hopfield(plant, design, y0, horizon, h)


def _design_doc(d):
    return {"kind": d.kind, "kp": d.kp, "kd": d.kd, "tau": d.tau,
            "plant_a": d.plant_a, "assigned_roots": list(d.assigned_roots.as_tuple()),
            "gain_norms": d.gain_norms(), "notes": list(d.notes)}


def _cert_doc(c):
    return {"s1": c.s1, "verdict": c.verdict, "window": list(c.window.as_tuple()),
            "chain_abscissa": c.chain_abscissa, "witnesses": list(c.witnesses)}


# -- subcommands --------------------------------------------------------------------

def cmd_design(args) -> int:
    req = parse_request(load_json(args.request))
    if args.epsilon is not None:
        req["options"]["epsilon"] = args.epsilon
    if args.horizon is not None:
        req["options"]["horizon"] = args.horizon
    if args.step is not None:
        req["options"]["step"] = args.step
    opts = req["options"]
    try:
        design = build_design(req)
    except UnreachableRateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    qp = design.quasipoly
    s1 = design.s1
    cert = certify_dominance(qp, s1, opts["im_limit"])
    doc = {"tool": "crrid", "version": __version__, "request": req,
           "design": _design_doc(design), "certificate": _cert_doc(cert)}
    if cert.verdict == "certified_strict":
        try:
            est = exp_estimate(qp, design.assigned_roots, opts["epsilon"])
            doc["estimate"] = {"epsilon": est.epsilon, "k": est.k, "k0": est.k0,
                               "rate": est.rate, "T_cut": est.T_cut}
        except ValueError as exc:
            doc["estimate"] = {"error": str(exc)}
    else:
        doc["estimate"] = None
    spec = {"chain_abscissa": qp.chain_abscissa}
    if isinstance(design.assigned_roots, RootTriple):
        sc = remaining_spectrum_three(design.assigned_roots, design.tau, 3)
        spec.update(on_vertical_line=sc.on_axis, axis_re=sc.axis_re, theta=sc.theta,
                    xi=sc.xi, omegas=sc.omegas, first_nonreal_roots=sc.roots)
    doc["spectrum"] = spec
    if opts["history"] is not None:
        plant = PlantSpec(req["plant"]["nu"], req["plant"]["mu"])
        try:
            traj = _simulate(design, plant, opts["history"], opts["horizon"], opts["step"])
        except GrammarError as exc:
            raise InputError(f"field 'options.history': {exc}") from None
        rate, err = _fit(traj)
        doc["simulation"] = {"history": opts["history"], "horizon": opts["horizon"],
                             "step": traj.step, "fitted_decay_rate": rate,
                             "fit_window": [DEFAULT_FIT[0], min(DEFAULT_FIT[1], opts["horizon"])],
                             "fit_error": err, "final_value": float(traj.values[-1])}
    emit(dumps(doc), args.out)
    return EXIT_REFUTED if cert.verdict == "refuted" else EXIT_OK


def _qp_from_args(args) -> NeutralQuasiPoly:
    if args.coeffs:
        a, alpha, beta, tau = _floats(args.coeffs, "--coeffs", 4)
        if not tau > 0:
            raise InputError("--coeffs: tau must be positive")
        return NeutralQuasiPoly(a, alpha, beta, tau)
    if not args.design:
        raise InputError("give a design/request file or --coeffs a,alpha,beta,tau")
    doc = load_json(args.design)
    if isinstance(doc, dict) and "design" in doc and "plant_a" in doc.get("design", {}):
        d = doc["design"]
        try:
            return NeutralQuasiPoly(float(d["plant_a"]), float(d["kd"]), float(d["kp"]),
                                    float(d["tau"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"field 'design': {exc}") from None
    req = parse_request(doc)
    try:
        return build_design(req).quasipoly
    except UnreachableRateError as exc:
        raise InputError(str(exc)) from None


def _window(text, qp):
    if text is None:
        tau = qp.tau
        lo = min(qp.chain_abscissa if math.isfinite(qp.chain_abscissa) else 0.0, -abs(qp.a))
        return Rectangle(lo - 10.0 / tau, max(5.0, abs(qp.a)) + 10.0 / tau,
                         -20 * math.pi / tau, 20 * math.pi / tau)
    vals = _floats(text, "--window", 4)
    try:
        return Rectangle(*vals)
    except ValueError as exc:
        raise InputError(f"--window: {exc}") from None


def _scatter_svg(path, roots, chain, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    if roots:
        ax.plot([z.real for z in roots], [z.imag for z in roots], "o", ms=4)
    if math.isfinite(chain):
        ax.axvline(chain, ls="--", lw=0.8, color="gray")
    ax.set_xlabel("Re s")
    ax.set_ylabel("Im s")
    ax.set_title(title)
    buf = io.StringIO()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def _line_svg(path, t, y, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, y, lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("y")
    ax.set_title(title)
    buf = io.StringIO()
    fig.savefig(buf, format="svg")
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def cmd_spectrum(args) -> int:
    qp = _qp_from_args(args)
    rect = _window(args.window, qp)
    rep = find_roots(qp, rect)
    rows = [(z.real, z.imag, r) for z, r in zip(rep.roots, rep.residuals)]
    comments = [f"chain_abscissa={qp.chain_abscissa!r}",
                f"count={rep.count_by_argument_principle}",
                "window=" + ",".join(repr(v) for v in rep.window.as_tuple())]
    emit(_csv(["re", "im", "residual"], rows, comments), args.out)
    if args.plot:
        _scatter_svg(args.plot, rep.roots, qp.chain_abscissa, "roots")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.plant:
        nu, mu = _floats(args.plant, "--plant", 2)
        design = None
    elif args.design:
        req = parse_request(load_json(args.design))
        nu, mu = req["plant"]["nu"], req["plant"]["mu"]
        try:
            design = build_design(req)
        except UnreachableRateError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_UNREACHABLE
    else:
        raise InputError("give a design/request file or --plant nu,mu")
    try:
        plant = PlantSpec(nu, mu, "linearized" if args.linearized else "tanh")
    except ValueError as exc:
        raise InputError(f"--plant: {exc}") from None
    horizon = args.horizon if args.horizon is not None else DEFAULT_HORIZON
    if not horizon > 0:
        raise InputError("--horizon must be positive")
    try:
        traj = _simulate(design, plant, args.history, horizon, args.step)
    except GrammarError as exc:
        raise InputError(f"--history: {exc}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    fit = tuple(_floats(args.fit, "--fit", 2)) if args.fit else DEFAULT_FIT
    rate, err = _fit(traj, fit)
    comments = [f"fitted_decay_rate={rate!r}", f"final_value={float(traj.values[-1])!r}",
                f"step={traj.step!r}"]
    if err:
        comments.append(f"fit_error={err}")
    rows = zip(traj.times, traj.values, traj.derivs)
    emit(_csv(["t", "y", "dy"], rows, comments), args.out)
    if args.plot:
        _line_svg(args.plot, traj.times, traj.values, "y(t)")
    return EXIT_OK


def cmd_compare(args) -> int:
    nu, mu = _floats(args.plant, "--plant", 2)
    triple = _floats(args.triple, "--triple", 3)
    pair = _floats(args.pair, "--pair", 2)
    if triple[0] != pair[0]:
        raise InputError(f"--pair: s1={pair[0]!r} differs from triple s1={triple[0]!r}")
    try:
        tr, pr = RootTriple(*triple), RootPair(*pair)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    try:
        pd = design_pd(nu, mu, tr)
        p = design_p(nu, mu, pr)
    except UnreachableRateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    plant = PlantSpec(nu, mu)
    horizon = args.horizon if args.horizon is not None else DEFAULT_HORIZON
    rates = {}
    for name, d in (("PD", pd), ("P", p)):
        rates[name] = _fit(_simulate(d, plant, args.history, horizon, None))[0]
    kpp = p.kp
    ineq = {
        "tau_pd > tau_p": pd.tau > p.tau,
        "kp' > max(kp, kd)": kpp > max(abs(pd.kp), abs(pd.kd)),
        "kp' > kp + kd": kpp > abs(pd.kp) + abs(pd.kd),
        "kp' > sqrt(kp^2 + kd^2)": kpp > math.hypot(pd.kp, pd.kd),
    }
    doc = {"tool": "crrid", "version": __version__,
           "plant": {"nu": nu, "mu": mu},
           "pd": _design_doc(pd), "p": _design_doc(p),
           "tau_star": {"pd": tau_star_three(tr) if tr.s1 < 0 else None,
                        "p": tau_star_pair(pr) if pr.s1 < 0 else None},
           "inequalities": ineq,
           "holding": [k for k, v in ineq.items() if v],
           "fitted_decay_rates": rates,
           "flags": list(p.notes)}
    emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_tau_star(args) -> int:
    roots = _floats(args.roots, "--roots", (2, 3))
    try:
        if len(roots) == 3:
            val = tau_star_three(RootTriple(*roots), method=args.method)
        else:
            val = tau_star_pair(RootPair(*roots))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    emit(dumps({"roots": roots, "tau_star": val}), args.out)
    return EXIT_OK


def _grid_range(text):
    lo, hi, n = _floats(text, "--range", 3) if text else (0.05, 5.0, 100)
    if not (0 < lo < hi) or n < 2:
        raise InputError("--range: need 0 < lo < hi and n >= 2")
    return np.linspace(lo, hi, int(n))


def cmd_regions(args) -> int:
    if args.grid:
        xs = _grid_range(args.range)
        if args.grid == "phi":
            rows = [(x, *region_boundaries(x)[:3]) for x in xs]
            text = _csv(["x", "phi1", "phi2", "phi3"], rows)
        elif args.grid == "W":
            text = _csv(["u", "v_boundary"], [(u, gcrrid_v_boundary(u)) for u in xs])
        else:
            rows = []
            for u in xs:
                b = icrrid_witness_box(u)
                rows.append((u, b.A1, b.A2, b.A3, b.v1, b.v2))
            text = _csv(["u", "A1", "A2", "A3", "v1", "v2"], rows)
        emit(text, args.out)
        return EXIT_OK
    if args.pair is None or args.a is None or args.tau is None:
        raise InputError("give --pair s1,s2 --a A --tau T, or --grid phi|W|Z")
    s1, s2 = _floats(args.pair, "--pair", 2)
    if not s2 < s1:
        raise InputError("--pair: need s2 < s1")
    if not args.tau > 0:
        raise InputError("--tau must be positive")
    lab = classify_two_root(RootPair(s1, s2), args.a, args.tau)
    doc = {"pair": [s1, s2], "a": args.a, "tau": args.tau, "region": lab.label,
           "third_root": lab.x, "lambda3": lab.lam3, "phi": list(lab.phi[:3]),
           "boundary": list(lab.boundary), "s1_strictly_dominant": lab.s1_strictly_dominant}
    emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_estimate_k(args) -> int:
    req = parse_request(load_json(args.design))
    eps = args.epsilon if args.epsilon is not None else req["options"]["epsilon"]
    if not eps > 0:
        raise InputError("--epsilon must be positive")
    try:
        d = build_design(req)
    except UnreachableRateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    try:
        est = exp_estimate(d.quasipoly, d.assigned_roots, eps)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFUTED
    emit(dumps({"epsilon": est.epsilon, "k": est.k, "k0": est.k0, "rate": est.rate,
                "T_cut": est.T_cut}), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="crrid",
        description="Partial pole placement for scalar neutral delay equations. "
                    "Negative list values need the '=' form, e.g. --window=-10,1,-30,30.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="output path (default: stdout)")

    sp = sub.add_parser("design", help="design gains, certify dominance, simulate")
    sp.add_argument("request", help="JSON request (or a previous report)")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--step", type=float)
    common(sp)
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("spectrum", help="locate roots in a window (CSV)")
    sp.add_argument("design", nargs="?", help="JSON request or report")
    sp.add_argument("--coeffs", help="a,alpha,beta,tau")
    sp.add_argument("--window", help="re0,re1,im0,im1")
    sp.add_argument("--plot", help="SVG scatter output")
    common(sp)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("simulate", help="closed-loop (or open-loop) trajectory (CSV)")
    sp.add_argument("design", nargs="?", help="JSON request or report")
    sp.add_argument("--plant", help="nu,mu for an uncontrolled run")
    sp.add_argument("--history", default="1+sin(t)",
                    help="constant or expression in t (sin, cos, exp, + - * /)")
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--step", type=float)
    sp.add_argument("--fit", help="t0,t1 decay-fit window (default 1,4)")
    sp.add_argument("--linearized", action="store_true", help="replace tanh by identity")
    sp.add_argument("--plot", help="SVG line plot output")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="delayed PD versus delayed P on one plant")
    sp.add_argument("--plant", required=True, help="nu,mu")
    sp.add_argument("--triple", required=True, help="s1,s2,s3 for PD")
    sp.add_argument("--pair", required=True, help="s1,s2 for P (equal for a double root)")
    sp.add_argument("--history", default="1+sin(t)")
    sp.add_argument("--horizon", type=float)
    common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("tau-star", help="largest stabilising delay")
    sp.add_argument("--roots", required=True, help="s1,s2[,s3]")
    sp.add_argument("--method", default="auto", choices=["auto", "closed", "bracket"])
    common(sp)
    sp.set_defaults(func=cmd_tau_star)

    sp = sub.add_parser("regions", help="two-root region classification and data grids")
    sp.add_argument("--pair", help="s1,s2")
    sp.add_argument("--a", type=float)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--grid", choices=["phi", "W", "Z"])
    sp.add_argument("--range", help="lo,hi,n for --grid (default 0.05,5,100)")
    common(sp)
    sp.set_defaults(func=cmd_regions)

    sp = sub.add_parser("estimate-k", help="constant of the exponential estimate")
    sp.add_argument("design", help="JSON request or report")
    sp.add_argument("--epsilon", type=float)
    common(sp)
    sp.set_defaults(func=cmd_estimate_k)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SpectrumSolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
