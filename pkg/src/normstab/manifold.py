"""Equilibrium manifold: Newton solver, sampled tangent space, graph chart.

Near a normally stable equilibrium the zero set of F is locally the graph
of a map phi from a kernel ball into the stable subspace: solving the
stable part of  P_s G(x + y) = A_s y  for y = phi(x) and checking that the
center part  P_c G(x + phi(x))  vanishes.  The chart certifies a radius
rho0 on which phi is solvable and the contraction bounds
|phi(x)|_1 <= |x| and |phi'(x)| <= 1 hold on a direction/radius grid.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ChartConstructionFailed,
    ManifoldInconsistent,
    NewtonDiverged,
    OutsideChart,
    SingularLinearization,
)
from .model import EQUILIBRIUM_TOL, eval_field, eval_jacobian

NEWTON_TOL = 1e-12
CENTER_TOL = 1e-8
BOUND_SLACK = 1e-9          # tolerance on the unit bounds at the rim
_FD_STEP = 3e-5
_FD_RTOL = 1e-6
_POINT_CACHE_CAP = 8192


def find_equilibrium(p, guess, tol=NEWTON_TOL, max_iter=50):
    """Damped least-squares Newton for F(u) = 0 from a guess.

    Singular kernel directions are truncated in the least-squares solve, so
    the iteration converges to the manifold point nearest the guess rather
    than sliding along it.
    """
    u = np.asarray(guess, dtype=float).copy()
    res = float(np.linalg.norm(eval_field(p, u)))
    for _ in range(max_iter):
        if res <= tol:
            return u
        J = eval_jacobian(p, u)
        F = eval_field(p, u)
        step, *_ = np.linalg.lstsq(J, -F, rcond=1e-10)
        lam = 1.0
        improved = False
        while lam >= 2.0**-30:
            trial = u + lam * step
            rt = float(np.linalg.norm(eval_field(p, trial)))
            if rt < res * (1.0 - 0.25 * lam) or rt <= tol:
                u, res = trial, rt
                improved = True
                break
            lam *= 0.5
        if not improved:
            # stiff fields hit a roundoff floor above tol; accept a stall
            # if it already satisfies the downstream equilibrium gate
            if res <= 0.5 * EQUILIBRIUM_TOL * (1.0 + float(np.linalg.norm(u))):
                return u
            raise NewtonDiverged(
                f"equilibrium search stalled at |F| = {res:.3e}"
            )
    if res <= max(tol, 0.5 * EQUILIBRIUM_TOL * (1.0 + float(np.linalg.norm(u)))):
        return u
    raise NewtonDiverged(f"no convergence in {max_iter} iterations, |F| = {res:.3e}")


@dataclass
class TangentEstimate:
    """Sampled tangent basis of the equilibrium set at u*."""

    basis: np.ndarray           # n x m_est, orthonormal
    singular_values: np.ndarray
    step: float
    n_directions: int

    @property
    def dim(self):
        return int(self.basis.shape[1])


def estimate_tangent_basis(p, u_star, chart_dim_hint=None, step=None, seed=0):
    """Estimate the tangent space by symmetric equilibrium displacements.

    Perturbs u* along random directions d, re-solves for the nearby
    equilibria, and takes (E(u*+h d) - E(u*-h d)) / (2h); the symmetric
    difference cancels curvature to O(h^2).  The span of the displacements
    is rank-revealed by SVD.
    """
    u_star = np.asarray(u_star, dtype=float)
    n = u_star.size
    if step is None:
        step = 1e-4 * (1.0 + float(np.linalg.norm(u_star)))
    k_rand = max((chart_dim_hint + 4) if chart_dim_hint is not None else 8, 2)
    rng = np.random.default_rng(seed)
    D_rand = rng.standard_normal((n, k_rand))
    D_rand /= np.linalg.norm(D_rand, axis=0)
    # canonical axes first: their tangent projections are well conditioned
    D = np.hstack([np.eye(n)[:, : min(n, 16)], D_rand])
    k = D.shape[1]

    W = np.empty((n, k))
    for j in range(k):
        up = find_equilibrium(p, u_star + step * D[:, j])
        um = find_equilibrium(p, u_star - step * D[:, j])
        W[:, j] = (up - um) / (2.0 * step)

    U, s, _ = np.linalg.svd(W, full_matrices=False)
    if s.size == 0 or s[0] < 0.1:
        m_est = 0
    else:
        m_est = int(np.sum(s >= 0.1 * s[0]))
    return TangentEstimate(
        basis=U[:, :m_est].copy(),
        singular_values=s,
        step=step,
        n_directions=k,
    )


@dataclass
class GraphChart:
    """Local graph parameterization of the equilibrium set over the kernel.

    phi maps the kernel ball of radius rho0 into the stable subspace; the
    memo caches reduced solutions on a lattice for continuation seeding,
    and the derivative is cross-checked against finite differences once
    per lattice cell.
    """

    sp: object
    sd: object
    rho0: float
    newton_tol: float = NEWTON_TOL
    center_tol: float = CENTER_TOL
    lattice_h: float = 0.0
    memo: dict = field(default_factory=dict)
    residual_log: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    frozen: bool = False

    def __post_init__(self):
        self.K = self.sd.kernel_basis
        self.Q_s = self.sd.stable_basis
        self.m = self.sd.m
        self.n_s = self.Q_s.shape[1]
        if self.lattice_h <= 0.0:
            self.lattice_h = max(self.rho0 / 32.0, 1e-12)
        self._fd_checked = set()
        # point caches: integrator stages and samplers revisit (nearly)
        # identical kernel coordinates many times; keys quantize xi at
        # 1e-12 relative scale, far below the Newton tolerance scale
        self._sol_cache = {}
        self._pp_cache = {}
        self._key_q = 1e-12 * max(self.rho0, 1.0)

    def _key(self, xi):
        return np.round(xi / self._key_q).astype(np.int64).tobytes()

    def freeze(self):
        """Make the memo read-only (safe for reuse across sweeps)."""
        self.frozen = True
        return self

    # --- reduced-coordinate internals -------------------------------------

    def _cell(self, xi):
        return tuple(np.round(np.asarray(xi) / self.lattice_h).astype(int))

    def _seed(self, cell):
        hit = self.memo.get(cell)
        if hit is not None:
            return hit[0]
        if self.m <= 3:
            best = None
            for off in np.ndindex(*([3] * self.m)):
                nb = tuple(c + o - 1 for c, o in zip(cell, off))
                hit = self.memo.get(nb)
                if hit is not None:
                    best = hit[0]
                    break
            if best is not None:
                return best
        return np.zeros(self.n_s)

    def _stable_residual(self, xi, eta):
        x = self.K @ xi
        y = self.Q_s @ eta
        g = self.sp.G(x + y)
        return self.Q_s.T @ (self.sd.P_s @ g) - self.sd.A_s_red @ eta

    def solve_reduced(self, xi, record=True):
        """Newton-solve the stable equation at kernel coordinates xi.

        Returns (eta, stable_residual, center_residual).  Center residual
        above the tolerance raises ManifoldInconsistent: the zero set is
        not a graph over the kernel there.
        """
        xi = np.asarray(xi, dtype=float)
        if self.m == 0:
            return np.zeros(self.n_s), 0.0, 0.0
        key = self._key(xi)
        hit = self._sol_cache.get(key)
        if hit is not None:
            return hit
        cell = self._cell(xi)
        eta = self._seed(cell).copy()
        res = float(np.linalg.norm(self._stable_residual(xi, eta)))
        for _ in range(50):
            if res <= self.newton_tol:
                break
            x = self.K @ xi
            y = self.Q_s @ eta
            Gj = self.sp.G_jac(x + y)
            Jr = self.Q_s.T @ (self.sd.P_s @ Gj) @ self.Q_s - self.sd.A_s_red
            try:
                step = np.linalg.solve(Jr, -self._stable_residual(xi, eta))
            except np.linalg.LinAlgError as exc:
                raise SingularLinearization(
                    f"stable-block solve singular at |x| = {np.linalg.norm(xi):.4g}"
                ) from exc
            lam = 1.0
            improved = False
            while lam >= 2.0**-20:
                trial = eta + lam * step
                rt = float(np.linalg.norm(self._stable_residual(xi, trial)))
                if rt < res * (1.0 - 0.25 * lam) or rt <= self.newton_tol:
                    eta, res = trial, rt
                    improved = True
                    break
                lam *= 0.5
            if not improved:
                raise NewtonDiverged(
                    f"graph-map Newton stalled at |x| = {np.linalg.norm(xi):.4g}, "
                    f"residual {res:.3e}"
                )
        if res > self.newton_tol:
            raise NewtonDiverged(
                f"graph-map Newton: residual {res:.3e} after 50 iterations"
            )
        x = self.K @ xi
        center = float(
            np.linalg.norm(self.sd.P_c @ self.sp.G(x + self.Q_s @ eta))
        )
        if record:
            if not self.frozen:
                self.memo[cell] = (eta.copy(), res, center)
            if len(self.residual_log) < 10000:
                self.residual_log.append((float(np.linalg.norm(xi)), res, center))
        if center > self.center_tol:
            raise ManifoldInconsistent(
                f"center residual {center:.3e} > {self.center_tol:.0e} at "
                f"|x| = {np.linalg.norm(xi):.4g}: equilibria are not a graph "
                f"over the kernel"
            )
        if len(self._sol_cache) >= _POINT_CACHE_CAP:
            self._sol_cache.pop(next(iter(self._sol_cache)))
        self._sol_cache[key] = (eta, res, center)
        return eta, res, center

    def _check_inside(self, xi):
        r = float(np.linalg.norm(xi))
        if r > self.rho0 * (1.0 + 1e-12):
            raise OutsideChart(f"|x| = {r:.6g} > rho0 = {self.rho0:.6g}")

    # --- public full-space interface ---------------------------------------

    def reduce_center(self, x):
        """Kernel coordinates of a center-space vector."""
        x = np.asarray(x, dtype=float)
        xi = self.K.T @ x
        if float(np.linalg.norm(x - self.K @ xi)) > 1e-8 * (1.0 + np.linalg.norm(x)):
            raise ValueError("x is not in the kernel subspace")
        return xi

    def phi(self, x):
        """Graph map value at a center-space point, as a full-space vector."""
        xi = self.reduce_center(x)
        self._check_inside(xi)
        eta, _, _ = self.solve_reduced(xi)
        return self.Q_s @ eta

    def phi_reduced(self, xi):
        xi = np.asarray(xi, dtype=float)
        self._check_inside(xi)
        eta, _, _ = self.solve_reduced(xi)
        return eta

    def phi_prime_reduced(self, xi, fd_check=True):
        """Reduced derivative H with phi'(x) = Q_s H K^T, by implicit
        differentiation of the stable equation; FD cross-checked once per
        lattice cell."""
        xi = np.asarray(xi, dtype=float)
        self._check_inside(xi)
        if self.m == 0:
            return np.zeros((self.n_s, 0))
        key = self._key(xi)
        hit = self._pp_cache.get(key)
        if hit is not None:
            return hit
        H = self._implicit_H(xi)
        if fd_check:
            cell = self._cell(xi)
            if cell not in self._fd_checked:
                self._fd_checked.add(cell)
                self._fd_cross_check(xi, H)
        if len(self._pp_cache) >= _POINT_CACHE_CAP:
            self._pp_cache.pop(next(iter(self._pp_cache)))
        self._pp_cache[key] = H
        return H

    def _implicit_H(self, xi):
        eta, _, _ = self.solve_reduced(xi)
        x = self.K @ xi
        z = x + self.Q_s @ eta
        Gj = self.sp.G_jac(z)
        PsGj = self.sd.P_s @ Gj
        lhs = self.sd.A_s_red - self.Q_s.T @ PsGj @ self.Q_s
        rhs = self.Q_s.T @ PsGj @ self.K
        try:
            return np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularLinearization("graph derivative solve singular") from exc

    def _fd_cross_check(self, xi, H):
        d = _FD_STEP * max(self.rho0, 1.0)
        # rim points cannot take +/-d displacements; run the whole
        # comparison at a pulled-back point so the differencing is centered
        nx = float(np.linalg.norm(xi))
        if nx + d > self.rho0:
            xi = xi * ((self.rho0 - 2.0 * d) / nx)
            H = self._implicit_H(xi)
        Hfd = np.empty_like(H)
        for j in range(self.m):
            e = np.zeros(self.m)
            e[j] = d
            hp, _, _ = self.solve_reduced(xi + e, record=False)
            hm, _, _ = self.solve_reduced(xi - e, record=False)
            Hfd[:, j] = (hp - hm) / (2.0 * d)
        err = float(np.linalg.norm(H - Hfd))
        ref = max(float(np.linalg.norm(Hfd)), 1e-3)
        self.diagnostics.setdefault("fd_check_max_rel", 0.0)
        rel = err / ref
        self.diagnostics["fd_check_max_rel"] = max(
            self.diagnostics["fd_check_max_rel"], rel
        )
        if rel > 100.0 * _FD_RTOL:
            raise ManifoldInconsistent(
                f"graph derivative disagrees with finite differences: rel {rel:.3e}"
            )

    def phi_prime(self, x, fd_check=True):
        """Full-space derivative matrix of the graph map at x."""
        xi = self.reduce_center(x)
        H = self.phi_prime_reduced(xi, fd_check=fd_check)
        return self.Q_s @ H @ self.K.T


def eval_phi_prime(chart, x):
    return chart.phi_prime(x)


def _sample_directions(m, seed=1234):
    """Deterministic direction set: axes, diagonals, and a seeded filler."""
    if m == 0:
        return np.zeros((0, 0))
    dirs = []
    eye = np.eye(m)
    for j in range(m):
        dirs.append(eye[j])
        dirs.append(-eye[j])
    if m >= 2:
        rng = np.random.default_rng(seed)
        extra = rng.standard_normal((8, m))
        extra /= np.linalg.norm(extra, axis=1, keepdims=True)
        dirs.extend(extra)
    return np.array(dirs)


_RADIUS_FRACTIONS = (1.0, 0.75, 0.5, 0.25)


def build_graph_map(sp, sd, rho_request, newton_tol=NEWTON_TOL,
                    center_tol=CENTER_TOL, bisect_iters=12):
    """Construct the graph chart and certify a radius rho0 <= rho_request.

    A radius passes when, on the direction/radius sample grid, the stable
    equation solves, the center residual stays below 1e-8, and the bounds
    |phi(x)|_1 <= |x| and |phi'(x)|_0 <= 1 hold.  If the requested radius
    fails, the radius is bisected; collapse to under 1e-3 * rho_request
    raises ChartConstructionFailed or ManifoldInconsistent depending on
    the dominant failure.
    """
    if rho_request <= 0:
        raise ValueError("rho_request must be positive")
    chart = GraphChart(sp=sp, sd=sd, rho0=float(rho_request),
                       newton_tol=newton_tol, center_tol=center_tol)
    if sd.m == 0:
        chart.diagnostics.update(
            {"phi_norm1_max_ratio": 0.0, "phi_prime_max": 0.0,
             "phi_prime_graphnorm_max": 0.0, "center_residual_max": 0.0,
             "certified_samples": 0}
        )
        return chart

    dirs = _sample_directions(sd.m)
    norm1 = lambda w: float(np.linalg.norm(w)) + float(np.linalg.norm(sd.A @ w))

    def try_radius(rho):
        stats = {"ratio1": 0.0, "pp": 0.0, "pp_graph": 0.0, "center": 0.0,
                 "samples": 0}
        for frac in _RADIUS_FRACTIONS:
            for d in dirs:
                xi = rho * frac * d
                eta, _, center = chart.solve_reduced(xi, record=True)
                y = chart.Q_s @ eta
                x = chart.K @ xi
                nx = float(np.linalg.norm(xi))
                ratio1 = norm1(y) / nx if nx > 0 else 0.0
                H = chart.phi_prime_reduced(xi, fd_check=False)
                pp = float(np.linalg.norm(H, 2))
                ppg = _graphnorm_opnorm(chart, H)
                stats["ratio1"] = max(stats["ratio1"], ratio1)
                stats["pp"] = max(stats["pp"], pp)
                stats["pp_graph"] = max(stats["pp_graph"], ppg)
                stats["center"] = max(stats["center"], center)
                stats["samples"] += 1
                if ratio1 > 1.0 + BOUND_SLACK or pp > 1.0 + BOUND_SLACK:
                    return False, stats, "bound"
        return True, stats, None

    def _graphnorm_opnorm(chart, H):
        # |phi'(x) xi|_1 / |xi| maximized over sampled unit xi; diagnostic only
        if chart.m == 1:
            cols = [np.array([1.0])]
        elif chart.m == 2:
            ang = np.linspace(0, 2 * math.pi, 16, endpoint=False)
            cols = [np.array([math.cos(a), math.sin(a)]) for a in ang]
        else:
            rng = np.random.default_rng(99)
            cols = [c / np.linalg.norm(c) for c in rng.standard_normal((16, chart.m))]
        best = 0.0
        for c in cols:
            w = chart.Q_s @ (H @ c)
            best = max(best, norm1(w))
        return best

    lo, hi = 0.0, float(rho_request)
    lo_stats = None
    fail_reason = None
    ok, stats, reason = _try_guarded(try_radius, hi)
    if ok is True:
        chart.rho0 = hi
        chart.diagnostics.update(_diag(stats))
        return chart
    fail_reason = reason
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        if mid < 1e-3 * rho_request:
            break
        ok, stats, reason = _try_guarded(try_radius, mid)
        if ok is True:
            lo, lo_stats = mid, stats
        else:
            hi = mid
            fail_reason = reason
    if lo <= 1e-3 * rho_request or lo_stats is None:
        if fail_reason == "center":
            raise ManifoldInconsistent(
                "center residual exceeds tolerance at every tested radius"
            )
        raise ChartConstructionFailed(
            f"graph map unsolvable near u*; last failure: {fail_reason}"
        )
    chart.rho0 = lo
    chart.lattice_h = max(chart.rho0 / 32.0, 1e-12)
    chart.diagnostics.update(_diag(lo_stats))
    return chart


def _try_guarded(fn, rho):
    try:
        return fn(rho)
    except ManifoldInconsistent:
        return False, None, "center"
    except (NewtonDiverged, SingularLinearization):
        return False, None, "newton"


def _diag(stats):
    return {
        "phi_norm1_max_ratio": stats["ratio1"],
        "phi_prime_max": stats["pp"],
        "phi_prime_graphnorm_max": stats["pp_graph"],
        "center_residual_max": stats["center"],
        "certified_samples": stats["samples"],
    }
