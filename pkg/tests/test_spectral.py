import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import planted, projection_identities
from normstab import model, spectral


def test_planted_semisimple_suite():
    rng = np.random.default_rng(20240814)
    hits = 0
    for _ in range(100):
        n = int(rng.integers(3, 9))
        m = int(rng.integers(1, n - 1))
        A, m_true = planted(n, m, rng)
        sd = spectral.linearize(A)
        verdict = spectral.check_normally_stable(sd, chart_dim=m_true)
        ok = (verdict.normally_stable and sd.m == m_true and sd.semisimple
              and sd.gap >= 0.5 - 1e-8)
        hits += ok
        if ok:
            projection_identities(sd)
    assert hits == 100


def test_planted_jordan_suite():
    rng = np.random.default_rng(77)
    hits = 0
    for _ in range(20):
        n = int(rng.integers(4, 9))
        m = int(rng.integers(2, n - 1))
        A, m_geo = planted(n, m, rng, jordan=True)
        sd = spectral.linearize(A)
        verdict = spectral.check_normally_stable(sd, chart_dim=m_geo)
        hits += (not sd.semisimple) and (not verdict.normally_stable) \
            and (not verdict.condition_iii)
    assert hits == 20


@pytest.mark.parametrize("name,chart_dim", [
    ("circle2d", 1), ("sphere3d", 2), ("quasi-line", 1),
    ("allen-cahn-const", 0), ("gap-fail", 1),
])
def test_gallery_projection_identities(name, chart_dim):
    p = model.get_gallery_problem(name)
    defaults = model.get_gallery_defaults(name)
    from normstab.manifold import find_equilibrium
    u_star = find_equilibrium(p, np.asarray(defaults.u_star_guess, dtype=float))
    sd = spectral.linearize(model.shift_to_deviation(p, u_star))
    assert sd.m == chart_dim
    projection_identities(sd)


def test_circle_spectral_oracle():
    p = model.get_gallery_problem("circle2d")
    sp = model.shift_to_deviation(p, np.array([1.0, 0.0]))
    sd = spectral.linearize(sp)
    assert sd.m == 1
    assert abs(sd.gap - 2.0) <= 1e-12
    assert abs(sd.omega - 0.9 * 2.0) <= 1e-12
    np.testing.assert_allclose(sd.P_c, [[0.0, 0.0], [0.0, 1.0]], atol=1e-12)
    v = np.array([0.3, 0.4])
    np.testing.assert_allclose(spectral.project(sd, v, "center"), [0.0, 0.4],
                               atol=1e-12)
    np.testing.assert_allclose(spectral.project(sd, v, "stable"), [0.3, 0.0],
                               atol=1e-12)
    verdict = spectral.check_normally_stable(sd, chart_dim=1)
    assert verdict.normally_stable


def test_sphere_spectral_oracle():
    p = model.get_gallery_problem("sphere3d")
    sd = spectral.linearize(
        model.shift_to_deviation(p, np.array([1.0, 0.0, 0.0])))
    assert sd.m == 2
    assert abs(sd.gap - 2.0) <= 1e-12
    verdict = spectral.check_normally_stable(sd, chart_dim=2)
    assert verdict.normally_stable


def test_empty_stable_part_gap_is_infinite():
    sd = spectral.linearize(np.zeros((2, 2)))
    assert sd.m == 2
    assert sd.gap == np.inf
    assert sd.omega == 1.0  # fallback decay margin


def test_jordan_gallery_flags_condition_iii():
    p = model.get_gallery_problem("jordan-fail")
    sd = spectral.linearize(model.shift_to_deviation(p, np.zeros(2)))
    assert not sd.semisimple
    verdict = spectral.check_normally_stable(sd, chart_dim=1)
    assert not verdict.condition_iii and not verdict.normally_stable


def test_gap_gallery_flags_condition_iv():
    p = model.get_gallery_problem("gap-fail")
    sd = spectral.linearize(model.shift_to_deviation(p, np.zeros(2)))
    assert sd.semisimple
    assert abs(sd.gap - (-1.0)) <= 1e-12
    verdict = spectral.check_normally_stable(sd, chart_dim=1)
    assert verdict.condition_iii and not verdict.condition_iv
    assert not verdict.normally_stable


def test_principal_angle_extremes():
    e1 = np.array([[1.0], [0.0]])
    e2 = np.array([[0.0], [1.0]])
    assert spectral.principal_angle(e1, e1) <= 1e-12
    assert abs(spectral.principal_angle(e1, e2) - np.pi / 2) <= 1e-12


def test_check_against_sampled_tangent_mismatch():
    p = model.get_gallery_problem("circle2d")
    sd = spectral.linearize(model.shift_to_deviation(p, np.array([1.0, 0.0])))
    wrong_tangent = np.array([[1.0], [0.0]])  # radial, not tangent
    verdict = spectral.check_normally_stable(sd, 1, tangent_basis=wrong_tangent)
    assert not verdict.condition_ii


# --- norm suite --------------------------------------------------------------


def test_norm_suite_graph_norm():
    sd = spectral.linearize(np.diag([2.0, 0.0]))
    norms = spectral.build_norm_suite(sd)
    v = np.array([1.0, 0.0])
    assert abs(norms.norm0(v) - 1.0) <= 1e-15
    assert abs(norms.norm1(v) - 3.0) <= 1e-15  # |v| + |Av|
    assert abs(norms.norm_gamma(v) - norms.norm1(v)) <= 1e-15
    assert abs(norms.decomposed(np.array([1.0, 2.0]), "gamma") - 5.0) <= 1e-12


def test_norm_suite_weighted():
    sd = spectral.linearize(np.diag([2.0, 0.0]))
    W = np.array([[4.0, 0.0], [0.0, 1.0]])
    norms = spectral.build_norm_suite(sd, weight=W)
    assert abs(norms.norm0(np.array([1.0, 0.0])) - 2.0) <= 1e-15
    with pytest.raises(np.linalg.LinAlgError):
        spectral.build_norm_suite(sd, weight=-np.eye(2))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2),
       st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2),
       st.floats(-100.0, 100.0))
def test_norm_axioms(a, b, c):
    sd = spectral.linearize(np.diag([2.0, 0.0]))
    norms = spectral.build_norm_suite(sd)
    va, vb = np.array(a), np.array(b)
    for nrm in (norms.norm0, norms.norm1):
        assert nrm(va + vb) <= nrm(va) + nrm(vb) + 1e-9 * (nrm(va) + nrm(vb))
        assert abs(nrm(c * va) - abs(c) * nrm(va)) <= 1e-9 * (1 + abs(c) * nrm(va))
        assert nrm(va) >= 0.0
