"""Command-line entry points: analyze, simulate, verify, gallery."""

import argparse
import sys

import numpy as np

from . import dynamics, manifold, report, spectral, stepcore
from .errors import NormstabError
from .model import load_problem, shift_to_deviation


def _parse_vec(text):
    try:
        return np.array([float(tok) for tok in text.split(",")], dtype=float)
    except ValueError:
        raise NormstabError(f"expected comma-separated floats, got {text!r}")


def _add_problem_arg(sub):
    sub.add_argument("problem",
                     help="config file, JSON string, or gallery name")


def _verdict_lines(v):
    yield f"  condition (i)   manifold dimension matches kernel: {'ok' if v.condition_i else 'FAIL'}"
    yield f"  condition (ii)  tangent space equals kernel:        {'ok' if v.condition_ii else 'FAIL'} (angle {v.tangent_angle:.3e})"
    yield f"  condition (iii) zero eigenvalue semisimple:         {'ok' if v.condition_iii else 'FAIL'}"
    yield f"  condition (iv)  spectral gap positive:              {'ok' if v.condition_iv else 'FAIL'} (gap {v.gap:.6g})"


def cmd_analyze(args):
    p = load_problem(args.problem)
    opts = report.VerifyOptions(seed=args.seed)
    if args.u_star_guess:
        opts.u_star_guess = tuple(_parse_vec(args.u_star_guess))
    if args.chart_dim is not None:
        opts.chart_dim = args.chart_dim
    state = report.analyze_problem(p, opts)
    v = state.verdict
    print(f"problem: {p.name} (dim {p.dim})")
    print(f"equilibrium: {np.array2string(state.u_star, precision=8, max_line_width=120)}")
    for line in _verdict_lines(v):
        print(line)
    print(f"kernel dim m = {v.m_kernel}, decay rate omega = {state.sd.omega:.6g}")
    verdict = "normally stable" if v.normally_stable else (
        "NOT normally stable (" + ", ".join(v.failed_conditions()) + ")")
    print("verdict: " + verdict)
    return 0 if v.normally_stable else 1


def cmd_simulate(args):
    p = load_problem(args.problem)
    u0 = _parse_vec(args.u0)
    guess = _parse_vec(args.u_star_guess) if args.u_star_guess else None
    if guess is None:
        try:
            from .model import get_gallery_defaults

            guess = np.asarray(get_gallery_defaults(p.name).u_star_guess)
        except NormstabError:
            guess = u0
    u_star = manifold.find_equilibrium(p, guess)
    sp = shift_to_deviation(p, u_star)
    traj = dynamics.integrate(sp, u0 - u_star, args.t_end, tol=args.tol)
    if args.out:
        traj.to_csv(args.out)
        print(f"wrote {traj.n_samples} samples to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(traj.to_csv_string())
    return 0


def cmd_verify(args):
    p = load_problem(args.problem)
    opts = report.VerifyOptions(seed=args.seed, tol=args.tol)
    if args.u0:
        opts.u0 = tuple(_parse_vec(args.u0))
    if args.u_star_guess:
        opts.u_star_guess = tuple(_parse_vec(args.u_star_guess))
    if args.t_end is not None:
        opts.t_end = args.t_end
    rep = report.verify_convergence(p, opts=opts)
    print(f"problem: {rep.problem['name']} (dim {rep.problem['dim']}, "
          f"backend {rep.problem['backend']})")
    for line in _verdict_lines(rep.verdict):
        print(line)
    if rep.verdict.normally_stable:
        c = rep.constants
        print(f"omega = {c['omega']:.6g}, rho0 = {c['rho0']:.6g}, "
              f"delta = {rep.delta:.6g}")
        print(f"M0*beta = {c['M0beta']:.6g} (M0 = {c['M0']:.6g}, "
              f"beta = {c['beta']:.6g})")
        if rep.fitted_rate is not None:
            print(f"fitted decay rate = {rep.fitted_rate:.6g} "
                  f"(required >= {c['omega']:.6g})")
        if rep.u_inf is not None:
            print("u_inf = " + np.array2string(np.asarray(rep.u_inf),
                                               precision=8,
                                               max_line_width=120))
    for chk in rep.checks:
        tag = "PASS" if chk.passed else "FAIL"
        print(f"  [{tag}] {chk.name}: measured {chk.measured:.6g} "
              f"vs tolerance {chk.tolerance:.6g}")
    print("result: " + ("PASS" if rep.passed else "FAIL"))
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(rep.to_json() + "\n")
        print(f"report written to {args.report}", file=sys.stderr)
    return 0 if rep.passed else 1


def cmd_gallery(args):
    reports, matches = report.run_gallery(
        which=args.name, report_dir=args.report_dir, seed=args.seed
    )
    ok = True
    for name, matched in matches.items():
        rep = reports[name]
        from .model import get_gallery_defaults

        expected = get_gallery_defaults(name).expected
        got = "pass" if rep.passed else (
            ",".join(rep.verdict.failed_conditions()) or "check-failure")
        tag = "ok" if matched else "MISMATCH"
        print(f"{name:20s} expected={expected:15s} got={got:25s} [{tag}]")
        ok = ok and matched
    print("gallery: " + ("all outcomes as expected" if ok else "MISMATCHES"))
    return 0 if ok else 1


def build_parser():
    ap = argparse.ArgumentParser(
        prog="normstab",
        description="Verify convergence to manifolds of equilibria "
                    "for du/dt + F(u) = 0.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="spectral verdict only")
    _add_problem_arg(a)
    a.add_argument("--u-star-guess", default=None,
                   help="comma-separated equilibrium guess")
    a.add_argument("--chart-dim", type=int, default=None,
                   help="expected equilibrium-manifold dimension")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(fn=cmd_analyze)

    s = sub.add_parser("simulate", help="integrate the deviation equation")
    _add_problem_arg(s)
    s.add_argument("--u0", required=True, help="comma-separated initial state")
    s.add_argument("--t-end", type=float, default=10.0)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--out", default=None, help="CSV output path (default stdout)")
    s.add_argument("--u-star-guess", default=None)
    s.set_defaults(fn=cmd_simulate)

    v = sub.add_parser("verify", help="full convergence verification")
    _add_problem_arg(v)
    v.add_argument("--u0", default=None, help="comma-separated initial state")
    v.add_argument("--u-star-guess", default=None)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tol", type=float, default=1e-8)
    v.add_argument("--t-end", type=float, default=None)
    v.add_argument("--report", default=None, help="write JSON report here")
    v.set_defaults(fn=cmd_verify)

    g = sub.add_parser("gallery", help="run built-in problems against "
                                       "their expected outcomes")
    g.add_argument("name", nargs="?", default="all")
    g.add_argument("--report-dir", default=None)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gallery)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except NormstabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
