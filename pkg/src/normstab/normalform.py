"""Normal form near the equilibrium manifold and its empirical constants.

In chart coordinates x = P_c v, y = P_s v - phi(x) the deviation equation
splits into

    dx/dt = T(x, y),        dy/dt + A_s y = R(x, y),

with  T = P_c [G(x + phi(x) + y) - G(x + phi(x))]  and
R = P_s [same difference] - phi'(x) T,  so both vanish identically at
y = 0: the manifold consists of equilibria of the normal form.

The structure constants C1 (local Lipschitz density of G) and beta (the
bound  max(|T|, |R|_0) <= beta |y|_1  on a ball) are empirical maxima over
seeded samples; the sampler mixes random directions with slow-stable-mode
and boundary-radius samples so the maxima are stable across fresh draws.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientSamples, OutsideChart
from .model import fd_jacobian


class NormalFormSystem:
    """Coordinate maps and reduced vector field for the normal form."""

    def __init__(self, sp, sd, chart, norms):
        self.sp = sp
        self.sd = sd
        self.chart = chart
        self.norms = norms
        self.m = sd.m
        self.K = sd.kernel_basis
        self.Q_s = sd.stable_basis
        self.n = sd.A.shape[0]
        self.n_s = self.Q_s.shape[1]
        self.A_s_red = sd.A_s_red
        self._analytic_jac = sp.base.jacobian is not None

    # --- coordinate maps ---------------------------------------------------

    def to_normal(self, v):
        """Split a deviation vector into chart coordinates (x, y)."""
        v = np.asarray(v, dtype=float)
        x = self.sd.P_c @ v
        y = self.sd.P_s @ v - self.chart.phi(x)
        return x, y

    def from_normal(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x + self.chart.phi(x) + y

    def reduced_state(self, x, y):
        """Stack (x, y) into reduced coordinates (xi, eta)."""
        xi = self.chart.reduce_center(np.asarray(x, dtype=float))
        eta = self.Q_s.T @ np.asarray(y, dtype=float)
        return np.concatenate([xi, eta])

    def split_reduced(self, s):
        return s[: self.m], s[self.m:]

    def full_from_reduced(self, s):
        xi, eta = self.split_reduced(np.asarray(s, dtype=float))
        x = self.K @ xi
        y = self.Q_s @ eta
        return self.from_normal(x, y)

    # --- the normal-form maps ----------------------------------------------

    def _gate(self, x, y):
        nx = float(np.linalg.norm(x))
        if nx > self.chart.rho0 * (1.0 + 1e-12):
            raise OutsideChart(f"|x| = {nx:.6g} > rho0 = {self.chart.rho0:.6g}")
        ny = self.norms.norm_gamma(y)
        if ny > 3.0 * self.chart.rho0 * (1.0 + 1e-12):
            raise OutsideChart(
                f"|y|_gamma = {ny:.6g} leaves the chart neighborhood"
            )

    def T(self, x, y):
        """Center component of the normal-form vector field."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self._gate(x, y)
        z_eq = x + self.chart.phi(x)
        diff = self.sp.G(z_eq + y) - self.sp.G(z_eq)
        return self.sd.P_c @ diff

    def R(self, x, y):
        """Stable component of the normal-form vector field."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self._gate(x, y)
        z_eq = x + self.chart.phi(x)
        diff = self.sp.G(z_eq + y) - self.sp.G(z_eq)
        t_full = self.sd.P_c @ diff
        if self.m == 0:
            return self.sd.P_s @ diff
        pp = self.chart.phi_prime(x)
        return self.sd.P_s @ diff - pp @ t_full

    def t_and_r(self, x, y):
        """Both components with the shared work done once."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z_eq = x + self.chart.phi(x)
        diff = self.sp.G(z_eq + y) - self.sp.G(z_eq)
        t_full = self.sd.P_c @ diff
        r_full = self.sd.P_s @ diff
        if self.m > 0:
            r_full = r_full - self.chart.phi_prime(x) @ t_full
        return t_full, r_full

    # --- reduced dynamics ---------------------------------------------------

    def rhs_reduced(self, t, s):
        xi, eta = self.split_reduced(np.asarray(s, dtype=float))
        nx = float(np.linalg.norm(xi))
        if nx > self.chart.rho0 * (1.0 + 1e-12):
            raise OutsideChart(
                f"center coordinate left the chart: |x| = {nx:.6g}"
            )
        x = self.K @ xi
        y = self.Q_s @ eta
        t_full, r_full = self.t_and_r(x, y)
        return np.concatenate([
            self.K.T @ t_full,
            -self.A_s_red @ eta + self.Q_s.T @ r_full,
        ])

    def jac_reduced(self, t, s):
        """Jacobian of the reduced field: analytic stable block when the
        problem has an analytic Jacobian, finite differences otherwise and
        for the (small) center block."""
        s = np.asarray(s, dtype=float)
        if self._analytic_jac and self.m == 0:
            eta = s
            z = self.Q_s @ eta
            Gj = self.sp.G_jac(z)
            return -self.A_s_red + self.Q_s.T @ (self.sd.P_s @ Gj) @ self.Q_s
        if self._analytic_jac and self.m > 0:
            xi, eta = self.split_reduced(s)
            x = self.K @ xi
            y = self.Q_s @ eta
            z_eq = x + self.chart.phi(x)
            Gj = self.sp.G_jac(z_eq + y)
            pp = self.chart.phi_prime(x)
            # d/dy blocks are exact: dT/deta and dR/deta at fixed x
            PcG = self.sd.P_c @ Gj
            PsG = self.sd.P_s @ Gj
            dT = self.K.T @ PcG @ self.Q_s
            dR = self.Q_s.T @ (PsG - pp @ PcG) @ self.Q_s - self.A_s_red
            J = np.empty((s.size, s.size))
            J[: self.m, self.m:] = dT
            J[self.m:, self.m:] = dR
            # center columns involve phi'' -> finite differences
            h = (np.finfo(float).eps ** (1.0 / 3.0)) * (1.0 + float(np.linalg.norm(s)))
            for j in range(self.m):
                e = np.zeros(s.size)
                e[j] = h
                fp = self.rhs_reduced(t, s + e)
                fm = self.rhs_reduced(t, s - e)
                J[:, j] = (fp - fm) / (2.0 * h)
            return J
        return fd_jacobian(lambda w: self.rhs_reduced(t, w), s)


# ---------------------------------------------------------------------------
# structure constants


@dataclass
class StructureConstants:
    """Empirical constants of the normal form on a ball.

    beta is the fitted sup of max(|T|, |R|_0) / |y|_1 over the sample set;
    C2 = beta / (eta + r); C1 is the sampled Lipschitz density of G.  The
    argmax witnesses are kept for reproducibility.
    """

    eta: float
    r: float
    rho: float
    C1: float
    C2: float
    beta: float
    M0beta: float
    smallness_ok: bool
    n_samples: int
    seed: int
    witness_C1: dict = field(default_factory=dict)
    witness_beta: dict = field(default_factory=dict)


def _slow_stable_direction(sd):
    """Real direction of the slowest-decaying stable mode, full space."""
    if sd.A_s_red.shape[0] == 0:
        return None
    evals, evecs = np.linalg.eig(sd.A_s_red)
    k = int(np.argmin(evals.real))
    d = np.real(evecs[:, k])
    nrm = float(np.linalg.norm(d))
    if nrm < 1e-12:
        d = np.imag(evecs[:, k])
        nrm = float(np.linalg.norm(d))
    return d / nrm


def _sample_stable_ball(nf, rho, count, rng):
    """Stable-space samples with |y|_gamma <= rho.

    Mixture: random rough directions, slow-mode-dominated directions, and
    a boundary-radius share, so the empirical sup is reproducible across
    fresh seeds.
    """
    out = np.empty((count, nf.n))
    slow = _slow_stable_direction(nf.sd)
    for i in range(count):
        g = rng.standard_normal(nf.n_s)
        mode = i % 4
        if mode == 0 and slow is not None:
            c = g * 0.05
            c += slow * (1.0 + 0.2 * rng.standard_normal())
        else:
            c = g
        y = nf.Q_s @ c
        ng = nf.norms.norm_gamma(y)
        if ng < 1e-14:
            y = nf.Q_s @ np.ones(nf.n_s)
            ng = nf.norms.norm_gamma(y)
        # every 4th sample sits exactly on the sphere
        radius = rho if mode == 3 else rho * rng.uniform(0.05, 1.0)
        out[i] = y * (radius / ng)
    return out


def _sample_center_ball(nf, rho, count, rng):
    if nf.m == 0:
        return np.zeros((count, nf.n))
    xi = rng.standard_normal((count, nf.m))
    nrm = np.linalg.norm(xi, axis=1, keepdims=True)
    radii = rho * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / nf.m)
    xi = xi / np.maximum(nrm, 1e-300) * radii
    return xi @ nf.K.T


def _sample_gamma_ball_full(nf, r, count, rng):
    """Full-space samples with |z|_gamma <= r (decomposed norm), mixing
    kernel, slow-stable, and rough components."""
    out = np.empty((count, nf.n))
    slow = _slow_stable_direction(nf.sd)
    for i in range(count):
        z = rng.standard_normal(nf.n)
        if i % 3 == 0 and slow is not None:
            z = 0.1 * z + slow * (1.0 + 0.2 * rng.standard_normal())
        if i % 3 == 1 and nf.m > 0:
            z = 0.3 * z + nf.K @ rng.standard_normal(nf.m)
        ng = nf.norms.decomposed(z, "gamma")
        if ng < 1e-14:
            z = np.ones(nf.n)
            ng = nf.norms.decomposed(z, "gamma")
        radius = r * (1.0 if i % 4 == 3 else rng.uniform(0.05, 1.0))
        out[i] = z * (radius / ng)
    return out


def estimate_structure_constants(nf, eta, r, n_samples=10000, seed=0, M0=1.0):
    """Fit C1, beta, C2 on the ball of radius r (gamma norm), rho = r/3.

    Preconditions: eta > 0 and 0 < r <= 3 * rho0 * (1 - 1e-6).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    r_cap = 3.0 * nf.chart.rho0 * (1.0 - 1e-6)
    if not 0 < r <= r_cap:
        raise ValueError(f"r must be in (0, {r_cap:.6g}], got {r}")
    rho = r / 3.0
    rng = np.random.default_rng(seed)

    # C1: Lipschitz density of G over pairs in the r-ball
    z1s = _sample_gamma_ball_full(nf, r, n_samples, rng)
    z2s = _sample_gamma_ball_full(nf, r, n_samples, rng)
    C1 = 0.0
    wit_c1 = {}
    used = 0
    for z1, z2 in zip(z1s, z2s):
        dz = z1 - z2
        denom_step = nf.norms.norm1(dz)
        if denom_step < 1e-14:
            continue
        dg = nf.sp.G(z1) - nf.sp.G(z2)
        num = math.sqrt(float(dg @ dg))
        ratio = num / ((eta + nf.norms.norm1(z2)) * denom_step)
        used += 1
        if ratio > C1:
            C1 = ratio
            wit_c1 = {"z1": z1.copy(), "z2": z2.copy(), "ratio": ratio}
    if used < max(10, n_samples // 10):
        raise InsufficientSamples(f"only {used} usable C1 pairs")

    # beta: sup of max(|T|, |R|_0) / |y|_1 over the rho-balls.  Each center
    # point is reused across a block of y draws: phi / phi' dominate the
    # cost and the chart caches exact points.
    block = 20
    n_x = (n_samples + block - 1) // block
    xs = np.repeat(_sample_center_ball(nf, rho, n_x, rng), block, axis=0)
    xs = xs[:n_samples]
    ys = _sample_stable_ball(nf, rho, n_samples, rng)
    beta = 0.0
    wit_b = {}
    used = 0
    for x, y in zip(xs, ys):
        y1 = nf.norms.norm1(y)
        if y1 < 1e-14:
            continue
        t_full, r_full = nf.t_and_r(x, y)
        val = max(math.sqrt(float(t_full @ t_full)),
                  math.sqrt(float(r_full @ r_full)))
        ratio = val / y1
        used += 1
        if ratio > beta:
            beta = ratio
            wit_b = {"x": x.copy(), "y": y.copy(), "ratio": ratio}
    if used < max(10, n_samples // 10):
        raise InsufficientSamples(f"only {used} usable (x, y) samples")

    C2 = beta / (eta + r)
    M0beta = M0 * beta
    return StructureConstants(
        eta=eta,
        r=r,
        rho=rho,
        C1=C1,
        C2=C2,
        beta=beta,
        M0beta=M0beta,
        smallness_ok=bool(M0beta <= 0.5),
        n_samples=n_samples,
        seed=seed,
        witness_C1=wit_c1,
        witness_beta=wit_b,
    )


def search_smallness(nf, M0, r_max=None, n_scan=2000, n_final=10000, seed=0,
                     max_levels=14):
    """Find the largest dyadic radius with M0 * beta <= 1/2.

    Scans r = r_max / 2^k with eta = r / 4, using a cheap sample count for
    the scan and re-fitting the winner at the full count.  Returns the
    final StructureConstants; smallness_ok is False only if every level
    fails even at the smallest radius.
    """
    if r_max is None:
        r_max = 3.0 * nf.chart.rho0 * (1.0 - 1e-6)
    last = None
    for k in range(max_levels + 1):
        r = r_max * 2.0**-k
        eta = r / 4.0
        scan = estimate_structure_constants(nf, eta, r, n_scan, seed, M0=M0)
        last = scan
        if scan.M0beta <= 0.35:
            final = estimate_structure_constants(nf, eta, r, n_final, seed + 1, M0=M0)
            if final.M0beta <= 0.5:
                return final
            last = final
    return last
