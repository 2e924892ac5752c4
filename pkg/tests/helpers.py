"""Closed-form oracles shared between the unit tests and the acceptance
suite: planted-spectrum matrices, the circle problem's radial solution, and
analytic decay trajectories."""

import math
import subprocess
import sys

import numpy as np

from normstab import dynamics, model

# One line per acceptance test, echoed in the terminal summary by conftest.
ACCEPTANCE_LINES = []


def criterion(label, ok, detail):
    """Record a single pass/fail line for an acceptance property, then
    assert it."""
    tag = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES.append(f"[{tag}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


def run_cli(*args, **kw):
    return subprocess.run([sys.executable, "-m", "normstab", *args],
                          capture_output=True, text=True, timeout=300, **kw)


def similarity(n, rng):
    # kappa(S) <= 4: orthogonal x diagonal(0.5..2) x orthogonal
    Q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = rng.uniform(0.5, 2.0, n)
    return Q1 @ np.diag(d) @ Q2


def planted(n, m, rng, jordan=False):
    """Matrix with an m-dim zero eigenspace, rest of spectrum in Re >= 0.5;
    when ``jordan`` is set, two of the zero slots fuse into a nilpotent
    block so the zero eigenvalue stops being semisimple."""
    blocks = []
    slots = n - m
    if jordan:
        assert m >= 1 and slots >= 1
        blocks.append(np.array([[0.0, 1.0], [0.0, 0.0]]))
        m_geo = m
        slots -= 1
        m -= 1
    else:
        m_geo = m
    blocks.extend([np.zeros((1, 1))] * m)
    while slots > 0:
        re = rng.uniform(0.5, 3.0)
        if slots >= 2 and rng.uniform() < 0.5:
            im = rng.uniform(0.2, 2.0)
            blocks.append(np.array([[re, -im], [im, re]]))
            slots -= 2
        else:
            blocks.append(np.array([[re]]))
            slots -= 1
    D = np.zeros((n, n))
    k = 0
    for b in blocks:
        s = b.shape[0]
        D[k:k + s, k:k + s] = b
        k += s
    S = similarity(n, rng)
    return S @ D @ np.linalg.solve(S, np.eye(n)), m_geo


def projection_identities(sd, atol=1e-10):
    n = sd.A.shape[0]
    scale = max(1.0, sd.norm_A)
    assert np.abs(sd.P_c + sd.P_s - np.eye(n)).max() <= atol
    assert np.abs(sd.P_c @ sd.P_c - sd.P_c).max() <= atol
    assert np.abs(sd.P_c @ sd.P_s).max() <= atol
    assert np.abs(sd.A @ sd.P_c - sd.P_c @ sd.A).max() <= atol * scale


def circle_setup(theta=0.4, r0=1.3):
    """Deviation problem around the circle point at angle theta, plus the
    closed-form radial solution r(t)^2 = r0^2 / (r0^2 + (1-r0^2) e^(-2t))."""
    p = model.get_gallery_problem("circle2d")
    direction = np.array([math.cos(theta), math.sin(theta)])
    sp = model.shift_to_deviation(p, direction)
    v0 = (r0 - 1.0) * direction

    def exact_v(t):
        t = np.asarray(t, dtype=float)
        s = r0 * r0 / (r0 * r0 + (1.0 - r0 * r0) * np.exp(-2.0 * t))
        return (np.sqrt(s) - 1.0)[:, None] * direction

    return sp, v0, exact_v


def max_error(traj, exact_v, dense=True):
    errs = [float(np.abs(traj.states - exact_v(traj.times)).max())]
    if dense:
        tt = np.linspace(traj.times[0], traj.times[-1], 2001)
        errs.append(float(np.abs(traj.eval(tt) - exact_v(tt)).max()))
    return max(errs)


def exp_trajectory(rate=2.0, t_end=10.0, n=4001, direction=(1.0, 0.0)):
    """Analytic trajectory w(t) = e^(-rate t) d on a uniform grid."""
    ts = np.linspace(0.0, t_end, n)
    d = np.asarray(direction, dtype=float)
    states = np.exp(-rate * ts)[:, None] * d
    return dynamics.Trajectory(
        times=ts,
        states=states,
        derivs=-rate * states,
        step_sizes=np.diff(ts),
        step_errors=np.zeros(ts.size - 1),
        kind="deviation",
        m=1,
    )
