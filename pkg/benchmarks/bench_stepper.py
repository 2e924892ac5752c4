"""Compare the compiled stepper core against the pure-Python twin.

Runs the same adaptive integrations through both backends and prints a
timing table.  Usage:  python benchmarks/bench_stepper.py [--repeat N]
"""

import argparse
import time

import numpy as np

from normstab import manifold, shift_to_deviation
from normstab.model import get_gallery_defaults, get_gallery_problem
from normstab.stepcore import STATUS_DONE, available_backends


def _setup(name):
    p = get_gallery_problem(name)
    g = get_gallery_defaults(name)
    u_star = manifold.find_equilibrium(p, np.asarray(g.u_star_guess))
    sp = shift_to_deviation(p, u_star)
    v0 = np.asarray(g.u0) - u_star
    return sp, v0


def _run(fn, sp, v0, t_end, tol):
    res = fn(lambda t, v: sp.rhs(v), lambda t, v: sp.rhs_jac(v),
             v0, 0.0, t_end, tol, 0.0, 0.0, 10**6)
    assert res["status"] == STATUS_DONE, res["status"]
    return res


def bench(repeat=3):
    cases = [
        ("circle2d", 30.0, 1e-10),
        ("allen-cahn-const", 20.0, 1e-9),
    ]
    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    header = f"{'case':20s} {'tol':>8s} {'steps':>7s}"
    for name in backends:
        header += f" {name + ' (s)':>18s}"
    if len(backends) == 2:
        header += f" {'speedup':>9s}"
    print(header)
    for case, t_end, tol in cases:
        sp, v0 = _setup(case)
        times = {}
        steps = {}
        drift = 0.0
        states = {}
        for bname, fn in backends.items():
            best = float("inf")
            for _ in range(repeat):
                t0 = time.perf_counter()
                res = _run(fn, sp, v0, t_end, tol)
                best = min(best, time.perf_counter() - t0)
            times[bname] = best
            steps[bname] = res["naccept"]
            states[bname] = res["states"][-1]
        if len(states) == 2:
            a, b = states.values()
            drift = float(np.max(np.abs(a - b)))
        row = f"{case:20s} {tol:8.1e} {max(steps.values()):7d}"
        for bname in backends:
            row += f" {times[bname]:18.4f}"
        if len(backends) == 2:
            t = list(times.values())
            row += f" {t[0] / t[1] if t[1] > 0 else float('inf'):8.2f}x"
        print(row)
        if len(states) == 2:
            print(f"{'':20s} max final-state backend difference: {drift:.3e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    bench(repeat=args.repeat)
