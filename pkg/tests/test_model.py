import json

import numpy as np
import pytest

from normstab import model
from normstab.errors import DimensionMismatch, ParseError, UnknownGallery


def test_gallery_registry_complete():
    names = model.gallery_names()
    for expected in ("circle2d", "sphere3d", "quasi-line", "jordan-fail",
                     "gap-fail", "allen-cahn-const"):
        assert expected in names


def test_circle_field_values():
    p = model.get_gallery_problem("circle2d")
    np.testing.assert_allclose(model.eval_field(p, np.array([1.0, 0.0])), 0.0,
                               atol=1e-15)
    # (|u|^2 - 1) u at (2, 0) is 3 * (2, 0)
    np.testing.assert_allclose(model.eval_field(p, np.array([2.0, 0.0])),
                               [6.0, 0.0], rtol=1e-14)


def test_sphere_equilibrium_on_unit_sphere():
    p = model.get_gallery_problem("sphere3d")
    np.testing.assert_allclose(model.eval_field(p, np.array([0.0, 0.0, 1.0])),
                               0.0, atol=1e-15)


def test_circle_jacobian_analytic():
    p = model.get_gallery_problem("circle2d")
    J = model.eval_jacobian(p, np.array([1.0, 0.0]))
    np.testing.assert_allclose(J, [[2.0, 0.0], [0.0, 0.0]], atol=1e-12)


def test_quasi_line_jacobian_independent_of_second_coordinate():
    p = model.get_gallery_problem("quasi-line")
    for s0 in (-1.0, 0.5, 2.0):
        J = model.eval_jacobian(p, np.array([0.0, s0]))
        np.testing.assert_allclose(J, [[2.0, 0.0], [0.0, 0.0]], atol=1e-12)


@pytest.mark.parametrize("name", ["circle2d", "sphere3d", "quasi-line",
                                  "allen-cahn-const"])
def test_fd_jacobian_matches_analytic(name, rng):
    p = model.get_gallery_problem(name)
    for _ in range(25):
        u = 1.0 + 0.1 * rng.standard_normal(p.dim)
        J_an = model.eval_jacobian(p, u)
        J_fd = model.fd_jacobian(lambda z: model.eval_field(p, z), u)
        scale = max(1.0, float(np.abs(J_an).max()))
        assert np.abs(J_fd - J_an).max() <= 1e-6 * scale


@pytest.mark.parametrize("name", ["quasi-line", "allen-cahn-const"])
def test_quasilinear_split_consistent(name, rng):
    p = model.get_gallery_problem(name)
    B, f = p.quasilinear
    for _ in range(10):
        u = 1.0 + 0.1 * rng.standard_normal(p.dim)
        lhs = model.eval_field(p, u)
        rhs = B(u) @ u + f(u)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * (1.0 + np.linalg.norm(u))


def test_load_problem_gallery_dict_and_bare_name():
    p1 = model.load_problem({"gallery": "circle2d"})
    p2 = model.load_problem("circle2d")
    assert p1.dim == p2.dim == 2
    u = np.array([0.3, -0.4])
    np.testing.assert_allclose(model.eval_field(p1, u),
                               model.eval_field(p2, u), rtol=1e-15)


def test_load_problem_expression_config(tmp_path):
    cfg = {"dim": 2, "field": ["(u[0]*u[0] + u[1]*u[1] - 1) * u[0]",
                               "(u[0]*u[0] + u[1]*u[1] - 1) * u[1]"]}
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(cfg))
    p = model.load_problem(str(path))
    ref = model.get_gallery_problem("circle2d")
    for u in (np.array([2.0, 0.0]), np.array([0.3, 1.1])):
        np.testing.assert_allclose(model.eval_field(p, u),
                                   model.eval_field(ref, u), rtol=1e-12)


def test_load_problem_rejects_garbage():
    with pytest.raises(UnknownGallery):
        model.load_problem({"gallery": "not-a-problem"})
    with pytest.raises(ParseError):
        model.load_problem({"dim": 2})
    with pytest.raises(ParseError):
        model.load_problem({"dim": 0, "field": ["u0"]})


def test_eval_field_checks_dimension():
    p = model.get_gallery_problem("circle2d")
    with pytest.raises(DimensionMismatch):
        model.eval_field(p, np.array([1.0, 0.0, 0.0]))


def test_shift_to_deviation_basics():
    p = model.get_gallery_problem("circle2d")
    u_star = np.array([1.0, 0.0])
    sp = model.shift_to_deviation(p, u_star)
    np.testing.assert_allclose(sp.A, [[2.0, 0.0], [0.0, 0.0]], atol=1e-12)
    assert np.linalg.norm(sp.G(np.zeros(2))) <= 1e-12
    # A z - F(u* + z) at z = (0.1, 0): (0.2, 0) - 0.21 * (1.1, 0)
    np.testing.assert_allclose(sp.G(np.array([0.1, 0.0])), [-0.031, 0.0],
                               atol=1e-14)


def test_shift_requires_equilibrium():
    p = model.get_gallery_problem("circle2d")
    from normstab.errors import NotAnEquilibrium
    with pytest.raises(NotAnEquilibrium):
        model.shift_to_deviation(p, np.array([0.5, 0.0]))


def test_deviation_field_quadratic_near_zero():
    # G(0) = 0 and G'(0) = 0, so |G(v)| = O(|v|^2)
    p = model.get_gallery_problem("sphere3d")
    sp = model.shift_to_deviation(p, np.array([1.0, 0.0, 0.0]))
    for h in (1e-3, 1e-4, 1e-5):
        v = h * np.array([0.3, -0.7, 0.64])
        assert np.linalg.norm(sp.G(v)) <= 10.0 * h * h
