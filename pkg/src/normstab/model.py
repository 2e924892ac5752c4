"""Problem definitions: vector fields, Jacobians, deviation form, gallery.

A problem is the autonomous system  du/dt + F(u) = 0  on R^n.  Equilibria
are zeros of F; the analysis pipeline shifts to the deviation  v = u - u*
and works with  dv/dt = -A v + G(v)  where A = F'(u*) and
G(v) = A v - F(u* + v)  collects the quadratic-and-higher remainder.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import expressions
from .errors import (
    DimensionMismatch,
    DomainViolation,
    NotAnEquilibrium,
    ParseError,
    UnknownGallery,
)

EQUILIBRIUM_TOL = 1e-10
_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class ProblemDef:
    """A vector field F with optional analytic Jacobian and quasilinear split.

    ``quasilinear`` is a pair of callables (B, f) with F(u) = B(u) u + f(u);
    it is consistency-checked at load time and carried for reporting, the
    pipeline itself always works with F directly.
    """

    name: str
    dim: int
    field: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    quasilinear: Optional[tuple] = None
    smoothness_k: int = 2
    domain_radius: float = math.inf

    @property
    def jacobian_is_fd(self):
        return self.jacobian is None


def _as_state(p, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (p.dim,):
        raise DimensionMismatch(
            f"state has shape {u.shape}, problem {p.name!r} has dim {p.dim}"
        )
    return u


def eval_field(p, u):
    """Evaluate F(u) with domain and shape checks."""
    u = _as_state(p, u)
    r = float(np.linalg.norm(u))
    if r > p.domain_radius:
        raise DomainViolation(
            f"|u| = {r:.6g} exceeds domain radius {p.domain_radius:.6g}"
        )
    out = np.asarray(p.field(u), dtype=float)
    if out.shape != (p.dim,):
        raise DimensionMismatch(
            f"field of {p.name!r} returned shape {out.shape}, expected ({p.dim},)"
        )
    return out


def fd_jacobian(f, u, h=None):
    """Central finite-difference Jacobian of a vector map at u."""
    u = np.asarray(u, dtype=float)
    n = u.size
    if h is None:
        h = _EPS ** (1.0 / 3.0) * (1.0 + float(np.linalg.norm(u)))
    J = np.empty((len(np.asarray(f(u))), n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (np.asarray(f(u + e)) - np.asarray(f(u - e))) / (2.0 * h)
    return J


def eval_jacobian(p, u):
    """F'(u), analytic when declared, else central finite differences."""
    u = _as_state(p, u)
    if p.jacobian is not None:
        J = np.asarray(p.jacobian(u), dtype=float)
        if J.shape != (p.dim, p.dim):
            raise DimensionMismatch(
                f"jacobian of {p.name!r} returned shape {J.shape}"
            )
        return J
    return fd_jacobian(lambda w: eval_field(p, w), u)


@dataclass
class ShiftedProblem:
    """Deviation form dv/dt = -A v + G(v) around an equilibrium u*."""

    base: ProblemDef
    u_star: np.ndarray
    A: np.ndarray
    checks: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.base.dim

    def G(self, v):
        # G(v) = A v - F(u* + v); G(0) = 0 and G'(0) = 0 by construction
        return self.A @ v - eval_field(self.base, self.u_star + v)

    def G_jac(self, v):
        return self.A - eval_jacobian(self.base, self.u_star + v)

    def rhs(self, v):
        """Deviation vector field dv/dt = -F(u* + v)."""
        return -eval_field(self.base, self.u_star + v)

    def rhs_jac(self, v):
        return -eval_jacobian(self.base, self.u_star + v)


def shift_to_deviation(p, u_star):
    """Shift the problem to deviation coordinates around an equilibrium.

    Raises NotAnEquilibrium if |F(u*)| exceeds 1e-10.  Records the
    residual and a finite-difference check of |G'(0)| in ``checks``.
    """
    u_star = _as_state(p, u_star)
    res = float(np.linalg.norm(eval_field(p, u_star)))
    if res > EQUILIBRIUM_TOL:
        raise NotAnEquilibrium(
            f"|F(u*)| = {res:.3e} > {EQUILIBRIUM_TOL:.0e} at u* = {u_star}"
        )
    A = eval_jacobian(p, u_star)
    sp = ShiftedProblem(base=p, u_star=u_star, A=A)
    gp0 = fd_jacobian(sp.G, np.zeros(p.dim))
    sp.checks = {
        "equilibrium_residual": res,
        "G_at_zero": float(np.linalg.norm(sp.G(np.zeros(p.dim)))),
        "G_prime_at_zero": float(np.linalg.norm(gp0, 2)),
        "jacobian_is_fd": p.jacobian_is_fd,
    }
    return sp


# ---------------------------------------------------------------------------
# built-in gallery


@dataclass(frozen=True)
class GalleryDefaults:
    """Canonical run parameters and expected verdict for a gallery problem."""

    u0: tuple
    u_star_guess: tuple
    chart_dim: int
    rho_request: float
    expected: str  # "pass" or the name of the failing condition
    notes: str = ""


def _radial_field(u):
    return (u @ u - 1.0) * u


def _radial_jac(u):
    return (u @ u - 1.0) * np.eye(u.size) + 2.0 * np.outer(u, u)


def _make_circle2d():
    return ProblemDef(
        name="circle2d",
        dim=2,
        field=_radial_field,
        jacobian=_radial_jac,
        domain_radius=6.0,
    )


def _make_sphere3d():
    return ProblemDef(
        name="sphere3d",
        dim=3,
        field=_radial_field,
        jacobian=_radial_jac,
        domain_radius=6.0,
    )


def _quasi_field(u):
    return np.array([2.0 * u[0] * (1.0 + u[0] ** 2), 0.0])


def _quasi_jac(u):
    return np.array([[2.0 + 6.0 * u[0] ** 2, 0.0], [0.0, 0.0]])


def _quasi_B(u):
    return np.array([[2.0 * (1.0 + u[0] ** 2), 0.0], [0.0, 0.0]])


def _quasi_f(u):
    return np.zeros(2)


def _make_quasi_line():
    return ProblemDef(
        name="quasi-line",
        dim=2,
        field=_quasi_field,
        jacobian=_quasi_jac,
        quasilinear=(_quasi_B, _quasi_f),
        domain_radius=8.0,
    )


_JORDAN = np.array([[0.0, 1.0], [0.0, 0.0]])
_GAPFAIL = np.diag([-1.0, 0.0])


def _make_jordan_fail():
    return ProblemDef(
        name="jordan-fail",
        dim=2,
        field=lambda u: _JORDAN @ u,
        jacobian=lambda u: _JORDAN.copy(),
    )


def _make_gap_fail():
    return ProblemDef(
        name="gap-fail",
        dim=2,
        field=lambda u: _GAPFAIL @ u,
        jacobian=lambda u: _GAPFAIL.copy(),
    )


_AC_N = 64


def _ac_laplacian(n):
    # 1D Laplacian on [0,1], Neumann ends via mirrored ghost points
    h = 1.0 / (n - 1)
    L = np.zeros((n, n))
    for i in range(1, n - 1):
        L[i, i - 1] = 1.0
        L[i, i] = -2.0
        L[i, i + 1] = 1.0
    L[0, 0] = -2.0
    L[0, 1] = 2.0
    L[-1, -1] = -2.0
    L[-1, -2] = 2.0
    return L / h**2


_AC_L = _ac_laplacian(_AC_N)


def _ac_field(u):
    return -(_AC_L @ u) + (u * u - 1.0) * u


def _ac_jac(u):
    return -_AC_L + np.diag(3.0 * u * u - 1.0)


def _ac_B(u):
    return -_AC_L + np.diag(u * u - 1.0)


def _ac_f(u):
    return np.zeros(u.size)


def _make_allen_cahn():
    return ProblemDef(
        name="allen-cahn-const",
        dim=_AC_N,
        field=_ac_field,
        jacobian=_ac_jac,
        quasilinear=(_ac_B, _ac_f),
        domain_radius=50.0,
    )


def _sphere_u0():
    d = np.array(
        [
            math.cos(0.2) * math.cos(0.1),
            math.cos(0.2) * math.sin(0.1),
            math.sin(0.2),
        ]
    )
    return tuple(1.02 * d)


def _ac_u0():
    x = np.linspace(0.0, 1.0, _AC_N)
    return tuple(1.0 + 0.02 * np.cos(math.pi * x))


_GALLERY = {
    "circle2d": (
        _make_circle2d,
        GalleryDefaults(
            u0=(1.05 * math.cos(0.3), 1.05 * math.sin(0.3)),
            u_star_guess=(math.cos(0.3), math.sin(0.3)),
            chart_dim=1,
            rho_request=0.55,
            expected="pass",
            notes="unit circle of equilibria, radial attraction at rate 2",
        ),
    ),
    "sphere3d": (
        _make_sphere3d,
        GalleryDefaults(
            u0=_sphere_u0(),
            u_star_guess=tuple(np.array(_sphere_u0()) / 1.02),
            chart_dim=2,
            rho_request=0.55,
            expected="pass",
            notes="unit sphere of equilibria",
        ),
    ),
    "quasi-line": (
        _make_quasi_line,
        GalleryDefaults(
            u0=(0.1, 1.3),
            u_star_guess=(0.0, 1.0),
            chart_dim=1,
            rho_request=1.0,
            expected="pass",
            notes="line of equilibria u[0]=0, quasilinear split declared",
        ),
    ),
    "jordan-fail": (
        _make_jordan_fail,
        GalleryDefaults(
            u0=(0.01, 0.01),
            u_star_guess=(0.0, 0.0),
            chart_dim=1,
            rho_request=0.2,
            expected="condition_iii",
            notes="nilpotent block: zero eigenvalue not semisimple",
        ),
    ),
    "gap-fail": (
        _make_gap_fail,
        GalleryDefaults(
            u0=(0.01, 0.0),
            u_star_guess=(0.0, 0.0),
            chart_dim=1,
            rho_request=0.2,
            expected="condition_iv",
            notes="an eigenvalue in the left half plane: no spectral gap",
        ),
    ),
    "allen-cahn-const": (
        _make_allen_cahn,
        GalleryDefaults(
            u0=_ac_u0(),
            u_star_guess=tuple(np.ones(_AC_N)),
            chart_dim=0,
            rho_request=3.0,
            expected="pass",
            notes="semilinear reaction-diffusion near the constant state 1",
        ),
    ),
}


def gallery_names():
    return list(_GALLERY)


def get_gallery_problem(name):
    """Instantiate a gallery problem. Raises UnknownGallery."""
    try:
        maker, _ = _GALLERY[name]
    except KeyError:
        raise UnknownGallery(
            f"unknown gallery problem {name!r}; available: {', '.join(_GALLERY)}"
        ) from None
    return maker()


def get_gallery_defaults(name):
    try:
        _, defaults = _GALLERY[name]
    except KeyError:
        raise UnknownGallery(f"unknown gallery problem {name!r}") from None
    return defaults


# ---------------------------------------------------------------------------
# config loading


def _check_quasilinear(p, rng):
    B, f = p.quasilinear
    for _ in range(5):
        scale = min(1.0, p.domain_radius / 2.0) if math.isfinite(p.domain_radius) else 1.0
        u = scale * rng.standard_normal(p.dim) / math.sqrt(p.dim)
        lhs = eval_field(p, u)
        rhs = np.asarray(B(u)) @ u + np.asarray(f(u))
        err = float(np.linalg.norm(lhs - rhs))
        if err > 1e-12 * (1.0 + float(np.linalg.norm(u))):
            raise ParseError(
                f"quasilinear split inconsistent with field: |F - (B u + f)| = {err:.3e}"
            )


def _probe(p):
    # shape errors surface at load time, not mid-pipeline
    eval_field(p, np.zeros(p.dim))
    if p.jacobian is not None:
        eval_jacobian(p, np.zeros(p.dim))
    if p.quasilinear is not None:
        _check_quasilinear(p, np.random.default_rng(0))


def load_problem(config):
    """Build a ProblemDef from a config dict, JSON string, or file path.

    Recognized keys: ``gallery`` (name), or ``dim`` + ``field`` (expression
    list) with optional ``jacobian`` (row list), ``quasilinear`` ({"B": rows,
    "f": components}), ``domain_radius``, ``smoothness_k``, ``name``.  A bare
    identifier in ``field`` is treated as a gallery lookup.
    """
    if isinstance(config, (str, Path)):
        text = str(config)
        if text.lstrip().startswith("{"):
            try:
                cfg = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}") from exc
        else:
            path = Path(text)
            if not path.exists():
                if text.replace("-", "_").isidentifier():
                    return load_problem({"gallery": text})
                raise ParseError(f"config file not found: {path}")
            try:
                cfg = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    elif isinstance(config, dict):
        cfg = config
    else:
        raise ParseError(f"config must be dict, JSON, or path; got {type(config).__name__}")

    if "gallery" in cfg:
        p = get_gallery_problem(cfg["gallery"])
        _probe(p)
        return p

    fld = cfg.get("field")
    if fld is None:
        raise ParseError("config needs either 'gallery' or 'field'")
    if isinstance(fld, str) and fld.replace("-", "_").isidentifier():
        p = get_gallery_problem(fld)
        _probe(p)
        return p

    try:
        dim = int(cfg["dim"])
    except KeyError:
        raise ParseError("expression configs must declare 'dim'") from None
    if dim < 1:
        raise ParseError(f"dim must be positive, got {dim}")

    field_fn = expressions.compile_vector(fld, dim)
    jac_fn = None
    if "jacobian" in cfg:
        jac_fn = expressions.compile_matrix(cfg["jacobian"], dim)
    quasi = None
    if "quasilinear" in cfg:
        q = cfg["quasilinear"]
        if not isinstance(q, dict) or "B" not in q or "f" not in q:
            raise ParseError("quasilinear needs keys 'B' and 'f'")
        quasi = (
            expressions.compile_matrix(q["B"], dim),
            expressions.compile_vector(q["f"], dim),
        )

    p = ProblemDef(
        name=str(cfg.get("name", "user-problem")),
        dim=dim,
        field=field_fn,
        jacobian=jac_fn,
        quasilinear=quasi,
        smoothness_k=int(cfg.get("smoothness_k", 2)),
        domain_radius=float(cfg.get("domain_radius", math.inf)),
    )
    _probe(p)
    return p
