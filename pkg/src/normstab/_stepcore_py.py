"""Adaptive implicit Runge-Kutta inner loop, pure NumPy backend.

Three-stage singly diagonally implicit scheme, stiffly accurate and
L-stable, order 3, with embedded order-2 weights for the error estimate.
The estimate is filtered through (I - h*gamma*J)^(-1) so stiff components
do not trigger spurious rejections, and the order-3 solution is the one
propagated; acceptance is error-per-unit-time (E <= tol * h), which makes
the observed global error scale superlinearly in the tolerance.

The compiled twin in _stepcore_cy.pyx implements the identical algorithm
with the identical constants; results agree to rounding.
"""

import numpy as np

# diagonal entry: the root of x^3 - 3x^2 + 3x/2 - 1/6 in (1/6, 1/2)
GAMMA = 0.4358665215084590
C2 = (1.0 + GAMMA) / 2.0
A21 = (1.0 - GAMMA) / 2.0
B1 = -(6.0 * GAMMA * GAMMA - 16.0 * GAMMA + 1.0) / 4.0
B2 = (6.0 * GAMMA * GAMMA - 20.0 * GAMMA + 5.0) / 4.0
B3 = GAMMA
# embedded order-2 weights (nodes c1, c2), zero weight on the last stage
BH2 = (1.0 - 2.0 * GAMMA) / (1.0 - GAMMA)
BH1 = 1.0 - BH2
E1 = B1 - BH1
E2 = B2 - BH2
E3 = B3

STATUS_DONE = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_NEWTON_FAIL = 2
STATUS_MAX_STEPS = 3
STATUS_DIVERGED = 4

MAX_NEWTON = 12
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 4.0
H_FLOOR_REL = 1e-13


def _rms(w):
    return float(np.sqrt(np.mean(w * w)))


def integrate_adaptive(rhs, jac, v0, t0, t_end, tol, h0=0.0, h_max=0.0,
                       max_steps=1000000, v_cap=0.0):
    """March v' = rhs(t, v) from t0 to t_end with adaptive steps.

    tol is the error-per-unit-time density; the step acceptance test is
    E <= tol * h with E an RMS-scaled filtered embedded estimate.

    v_cap > 0 aborts with STATUS_DIVERGED once max|v| passes the cap, so
    solutions racing to a finite-time blow-up fail fast instead of
    grinding the step budget down near the pole.

    Returns a dict with status plus node arrays: times, states, derivs
    (rhs values at the nodes, for dense output), steps, errors, and
    evaluation counters.
    """
    v = np.array(v0, dtype=float)
    n = v.size
    t = float(t0)
    span = float(t_end) - t
    if span <= 0.0:
        raise ValueError("t_end must exceed t0")
    if h_max <= 0.0:
        h_max = span / 16.0
    eye = np.eye(n)

    counters = {"nfev": 0, "njev": 0, "naccept": 0, "nreject": 0}

    def call_rhs(tt, vv):
        counters["nfev"] += 1
        return np.asarray(rhs(tt, vv), dtype=float)

    f = call_rhs(t, v)

    if h0 <= 0.0:
        # conservative first step from the initial derivative magnitude
        d0 = _rms(v / (1.0 + np.abs(v)))
        d1 = _rms(f / (1.0 + np.abs(v)))
        h = 0.01 * d0 / d1 if d1 > 1e-300 and d0 > 1e-300 else span / 1000.0
        h = max(h, span * 1e-10)
    else:
        h = h0
    h = min(h, h_max, span)
    h_floor = H_FLOOR_REL * span

    times = [t]
    states = [v.copy()]
    derivs = [f.copy()]
    steps = []
    errors = []

    def solve_stage(t_stage, w, z0, hg, Minv, scale, ntol):
        # simplified Newton for z = w + h*gamma*f(t_stage, z); the stage
        # derivative is recovered algebraically from the converged solve
        z = z0.copy()
        prev = np.inf
        for _ in range(MAX_NEWTON):
            r = z - hg * call_rhs(t_stage, z) - w
            dz = Minv @ r
            z -= dz
            dn = _rms(dz / scale)
            if dn <= ntol:
                return z, (z - w) / hg, True
            if dn > 2.0 * prev:
                break
            prev = dn
        return z, None, False

    def result(status):
        return {
            "status": status,
            "times": np.asarray(times),
            "states": np.asarray(states).reshape(len(times), n),
            "derivs": np.asarray(derivs).reshape(len(times), n),
            "steps": np.asarray(steps),
            "errors": np.asarray(errors),
            **counters,
        }

    for _ in range(max_steps):
        if t >= t_end - 1e-14 * span:
            return result(STATUS_DONE)
        h = min(h, t_end - t)
        if h < h_floor:
            return result(STATUS_STEP_UNDERFLOW)

        J = np.asarray(jac(t, v), dtype=float)
        counters["njev"] += 1
        newton_fail_streak = 0
        accepted = False
        while not accepted:
            hg = h * GAMMA
            try:
                Minv = np.linalg.inv(eye - hg * J)
            except np.linalg.LinAlgError:
                Minv = None
            scale = 1.0 + np.abs(v)
            ntol = max(2e-4 * tol * h, 1e-15)

            ok = Minv is not None
            if ok:
                w1 = v
                z1, f1, ok = solve_stage(
                    t + GAMMA * h, w1, v + hg * f, hg, Minv, scale, ntol
                )
            if ok:
                w2 = v + (h * A21) * f1
                z2, f2, ok = solve_stage(
                    t + C2 * h, w2, w1 + hg * f1, hg, Minv, scale, ntol
                )
            if ok:
                w3 = v + h * (B1 * f1 + B2 * f2)
                z3, f3, ok = solve_stage(
                    t + h, w3, w2 + hg * f2, hg, Minv, scale, ntol
                )

            if not ok:
                newton_fail_streak += 1
                counters["nreject"] += 1
                h *= 0.25
                if h < h_floor or newton_fail_streak > 12:
                    return result(STATUS_NEWTON_FAIL)
                continue

            est = Minv @ (h * (E1 * f1 + E2 * f2 + E3 * f3))
            sc = 1.0 + np.maximum(np.abs(v), np.abs(z3))
            err = _rms(est / sc)

            if err <= tol * h:
                steps.append(h)
                errors.append(err)
                t = t + h
                v = z3
                f = f3
                times.append(t)
                states.append(v.copy())
                derivs.append(f.copy())
                counters["naccept"] += 1
                accepted = True
                if v_cap > 0.0 and (not np.isfinite(v).all()
                                    or np.abs(v).max() > v_cap):
                    return result(STATUS_DIVERGED)
                fac = MAX_FACTOR if err <= 0.0 else SAFETY * np.sqrt(tol * h / err)
                h = min(h * min(MAX_FACTOR, max(MIN_FACTOR, fac)), h_max)
            else:
                counters["nreject"] += 1
                fac = SAFETY * np.sqrt(tol * h / err)
                h *= min(0.9, max(MIN_FACTOR, fac))
                if h < h_floor:
                    return result(STATUS_STEP_UNDERFLOW)

    return result(STATUS_MAX_STEPS)
