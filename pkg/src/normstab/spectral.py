"""Spectral splitting of the linearization and the normal-stability verdict.

For A = F'(u*) the center space is the kernel N(A) and the stable space is
the range R(A).  Zero must be semisimple (N(A) + R(A) spans everything,
equivalently rank A = rank A^2) and the nonzero spectrum must sit strictly
in the right half plane; the spectral projection is built from right and
left kernel bases as  P_c = K (L^T K)^(-1) L^T.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SingularLinearization

ZERO_TOL_FACTOR = 1e-8
_EPS = float(np.finfo(float).eps)


@dataclass
class SpectralData:
    """Linearization A with its kernel/stable splitting.

    ``failures`` lists which structural assumptions broke ("ZeroNotSemisimple",
    "NoSpectralGap"); construction itself never raises for those, so verdicts
    can report them.
    """

    A: np.ndarray
    eigenvalues: np.ndarray
    m: int                      # geometric kernel dimension
    m_algebraic: int
    kernel_basis: np.ndarray    # n x m, orthonormal columns
    left_kernel_basis: np.ndarray
    P_c: np.ndarray
    P_s: np.ndarray
    A_s: np.ndarray             # P_s A P_s in full space
    stable_basis: np.ndarray    # n x (n-m), orthonormal columns spanning range(P_s)
    A_s_red: np.ndarray         # stable_basis^T A stable_basis
    gap: float
    omega: float
    omega_fraction: float
    semisimple: bool
    gap_ok: bool
    zero_tol: float
    norm_A: float
    failures: list = field(default_factory=list)


def _svd_rank(s, tol):
    return int(np.sum(s > tol))


def linearize(src, omega_fraction=0.9, zero_tol_factor=ZERO_TOL_FACTOR):
    """Split the spectrum of A (or of a shifted problem's A) at zero.

    Eigenvalues with |lambda| <= zero_tol_factor * |A| count as zero.  The
    decay margin omega defaults to 0.9 * gap; if the stable spectrum is
    empty the gap is +inf and omega falls back to 1.0.
    """
    A = np.asarray(getattr(src, "A", src), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SingularLinearization(f"linearization must be square, got {A.shape}")
    n = A.shape[0]
    norm_A = float(np.linalg.norm(A, 2))
    ztol = max(zero_tol_factor * norm_A, 64.0 * _EPS * max(norm_A, 1.0))

    eigvals = np.linalg.eigvals(A)
    zero_mask = np.abs(eigvals) <= ztol
    m_alg = int(np.sum(zero_mask))

    U, s, Vh = np.linalg.svd(A)
    m_geo = n - _svd_rank(s, ztol)
    K = Vh[n - m_geo:].T.copy() if m_geo > 0 else np.zeros((n, 0))
    L = U[:, n - m_geo:].copy() if m_geo > 0 else np.zeros((n, 0))

    # semisimplicity: rank A == rank A^2, cross-checked by L^T K invertibility
    ztol2 = max(zero_tol_factor * norm_A**2, 64.0 * _EPS * max(norm_A, 1.0) ** 2)
    rank_A = n - m_geo
    rank_A2 = _svd_rank(np.linalg.svd(A @ A, compute_uv=False), ztol2)
    pairing_ok = True
    if m_geo > 0:
        C = L.T @ K
        smin = float(np.linalg.svd(C, compute_uv=False).min())
        pairing_ok = smin > 1e-8
    semisimple = (rank_A == rank_A2) and (m_alg == m_geo) and pairing_ok

    failures = []
    if not semisimple:
        failures.append("ZeroNotSemisimple")

    if m_geo == 0:
        P_c = np.zeros((n, n))
    elif semisimple:
        P_c = K @ np.linalg.solve(L.T @ K, L.T)
    else:
        # orthogonal fallback so the object stays usable for reporting
        P_c = K @ K.T
    P_s = np.eye(n) - P_c

    sigma_s = eigvals[~zero_mask]
    if sigma_s.size == 0:
        gap = math.inf
    else:
        gap = float(np.min(sigma_s.real))
    gap_ok = gap > 0.0
    if not gap_ok:
        failures.append("NoSpectralGap")
    if math.isinf(gap):
        omega = 1.0
    else:
        omega = omega_fraction * max(gap, 0.0)

    # orthonormal basis of range(P_s); projector singular values are >= 1
    # on the range and 0 off it, so a 0.5 cut is safe even for oblique P_s
    if m_geo < n:
        Uq, sq, _ = np.linalg.svd(P_s)
        Q_s = Uq[:, : n - m_geo].copy()
        if np.sum(sq > 0.5) != n - m_geo:
            failures.append("StableBasisIllConditioned")
    else:
        Q_s = np.zeros((n, 0))

    A_s = P_s @ A @ P_s
    A_s_red = Q_s.T @ A @ Q_s

    return SpectralData(
        A=A,
        eigenvalues=eigvals,
        m=m_geo,
        m_algebraic=m_alg,
        kernel_basis=K,
        left_kernel_basis=L,
        P_c=P_c,
        P_s=P_s,
        A_s=A_s,
        stable_basis=Q_s,
        A_s_red=A_s_red,
        gap=gap,
        omega=omega,
        omega_fraction=omega_fraction,
        semisimple=semisimple,
        gap_ok=gap_ok,
        zero_tol=ztol,
        norm_A=norm_A,
        failures=failures,
    )


def project(sd, v, which):
    '''Apply the center ("center") or stable ("stable") spectral projection.'''
    v = np.asarray(v, dtype=float)
    if which == "center":
        return sd.P_c @ v
    if which == "stable":
        return sd.P_s @ v
    raise ValueError(f"which must be 'center' or 'stable', got {which!r}")


def principal_angle(B1, B2):
    """Largest principal angle between the column spans of two orthonormal bases.

    Computed from the projection residual (sin of the angle), which stays
    accurate for small angles where the cosine saturates at 1.
    """
    if B1.shape[1] != B2.shape[1]:
        return math.pi / 2.0
    if B1.shape[1] == 0:
        return 0.0
    R = B2 - B1 @ (B1.T @ B2)
    s = np.linalg.svd(R, compute_uv=False)
    return float(math.asin(min(1.0, float(s.max()))))


@dataclass
class StabilityVerdict:
    """Outcome of the four normal-stability conditions at an equilibrium."""

    condition_i: bool           # manifold dimension matches the chart
    condition_ii: bool          # tangent space equals the kernel
    condition_iii: bool         # zero eigenvalue semisimple
    condition_iv: bool          # nonzero spectrum strictly stable
    m_manifold: int
    m_kernel: int
    tangent_angle: float
    gap: float
    normally_stable: bool
    messages: list = field(default_factory=list)

    def failed_conditions(self):
        names = ["condition_i", "condition_ii", "condition_iii", "condition_iv"]
        return [nm for nm in names if not getattr(self, nm)]


ANGLE_TOL = 1e-6


def check_normally_stable(sd, chart_dim, tangent_basis=None):
    """Evaluate conditions (i)-(iv) against a claimed chart dimension.

    ``tangent_basis`` is an orthonormal sampled tangent basis of the
    equilibrium set at u*; without it conditions (i)/(ii) fall back to
    comparing the kernel dimension with the claim.
    """
    messages = []
    m_kernel = sd.m

    if tangent_basis is not None:
        tangent_basis = np.asarray(tangent_basis, dtype=float)
        m_manifold = tangent_basis.shape[1]
        cond_i = m_manifold == chart_dim
        angle = principal_angle(sd.kernel_basis, tangent_basis)
        cond_ii = (m_manifold == m_kernel) and angle <= ANGLE_TOL
        if not cond_i:
            messages.append(
                f"sampled manifold dimension {m_manifold} != chart dimension {chart_dim}"
            )
        if not cond_ii:
            messages.append(
                f"tangent/kernel principal angle {angle:.3e} exceeds {ANGLE_TOL:.0e}"
                if m_manifold == m_kernel
                else f"tangent dimension {m_manifold} != kernel dimension {m_kernel}"
            )
    else:
        m_manifold = m_kernel
        cond_i = m_kernel == chart_dim
        cond_ii = cond_i
        angle = 0.0
        if not cond_i:
            messages.append(
                f"kernel dimension {m_kernel} != chart dimension {chart_dim}"
            )

    cond_iii = sd.semisimple
    if not cond_iii:
        messages.append(
            f"zero eigenvalue not semisimple (algebraic {sd.m_algebraic}, "
            f"geometric {sd.m})"
        )
    cond_iv = sd.gap_ok
    if not cond_iv:
        messages.append(f"stable spectrum reaches Re = {sd.gap:.6g} <= 0")

    return StabilityVerdict(
        condition_i=cond_i,
        condition_ii=cond_ii,
        condition_iii=cond_iii,
        condition_iv=cond_iv,
        m_manifold=m_manifold,
        m_kernel=m_kernel,
        tangent_angle=angle,
        gap=sd.gap,
        normally_stable=cond_i and cond_ii and cond_iii and cond_iv,
        messages=messages,
    )


class NormSuiteX:
    """State-space norms: base |.|_0, graph norm |.|_1 = |.|_0 + |A .|_0,
    the intermediate norm |.|_gamma (defaults to |.|_1), and the decomposed
    variants |P_c v|_0 + |P_s v|_j used along trajectories.

    An optional SPD weight W replaces the Euclidean base norm by
    sqrt(v^T W v).
    """

    def __init__(self, sd, weight=None):
        self.sd = sd
        self.A = sd.A
        if weight is not None:
            W = np.asarray(weight, dtype=float)
            if W.shape != sd.A.shape:
                raise ValueError(f"weight shape {W.shape} != {sd.A.shape}")
            self._chol = np.linalg.cholesky(W)  # raises if not SPD
        else:
            self._chol = None

    def norm0(self, v):
        if self._chol is not None:
            w = self._chol.T @ v
            return math.sqrt(float(w @ w))
        v = np.asarray(v, dtype=float)
        return math.sqrt(float(v @ v))

    def norm1(self, v):
        v = np.asarray(v, dtype=float)
        Av = self.A @ v
        if self._chol is not None:
            return self.norm0(v) + self.norm0(Av)
        return math.sqrt(float(v @ v)) + math.sqrt(float(Av @ Av))

    def norm_gamma(self, v):
        return self.norm1(v)

    def decomposed(self, v, j="gamma"):
        '''|P_c v|_0 + |P_s v|_j for j in {"0", "gamma", "1"}.'''
        v = np.asarray(v, dtype=float)
        vc = self.sd.P_c @ v
        vs = self.sd.P_s @ v
        if j in ("0", 0):
            tail = self.norm0(vs)
        elif j in ("1", 1):
            tail = self.norm1(vs)
        elif j == "gamma":
            tail = self.norm_gamma(vs)
        else:
            raise ValueError(f"unknown norm index {j!r}")
        return self.norm0(vc) + tail

    # transforms for pairwise-distance evaluation of trajectory norms:
    # each returns matrices whose row-wise Euclidean distances SUM to the
    # requested norm of the state difference
    def stacked_transforms(self, which):
        Ln = self._chol.T if self._chol is not None else None

        def base(M):
            return M @ Ln if Ln is not None else M

        if which == "0":
            return [lambda M: base(M)]
        if which == "1":
            return [lambda M: base(M), lambda M: base(M @ self.A.T)]
        raise ValueError(f"unknown transform {which!r}")


def build_norm_suite(sd, weight=None):
    return NormSuiteX(sd, weight=weight)
