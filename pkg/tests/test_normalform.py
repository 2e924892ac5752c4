import numpy as np
import pytest

from normstab import manifold, model, normalform, spectral
from normstab.errors import OutsideChart


@pytest.fixture(scope="module")
def circle_nf():
    p = model.get_gallery_problem("circle2d")
    u_star = manifold.find_equilibrium(p, np.array([1.0, 0.0]))
    sp = model.shift_to_deviation(p, u_star)
    sd = spectral.linearize(sp)
    chart = manifold.build_graph_map(sp, sd, rho_request=0.6)
    norms = spectral.build_norm_suite(sd)
    return normalform.NormalFormSystem(sp, sd, chart, norms)


def test_stable_component_oracle_at_base_point(circle_nf):
    # x = 0, y = 0.1 e1: G(y) = (0.2, 0) - 0.21*(1.1, 0) = (-0.031, 0),
    # entirely in the stable direction, and phi'(0) = 0
    t_full, r_full = circle_nf.t_and_r(np.zeros(2), np.array([0.1, 0.0]))
    assert np.linalg.norm(t_full) <= 1e-13
    np.testing.assert_allclose(r_full, [-0.031, 0.0], atol=1e-12)


def test_vector_fields_vanish_at_origin(circle_nf):
    t_full, r_full = circle_nf.t_and_r(np.zeros(2), np.zeros(2))
    assert np.linalg.norm(t_full) <= 1e-14
    assert np.linalg.norm(r_full) <= 1e-14


def test_t_and_r_vanish_on_equilibrium_set(circle_nf):
    # y = 0 must be invariant: both components vanish along the graph
    for x1 in np.linspace(-circle_nf.chart.rho0, circle_nf.chart.rho0, 100):
        x = x1 * circle_nf.K[:, 0]
        t_full, r_full = circle_nf.t_and_r(x, np.zeros(2))
        assert max(np.abs(t_full).max(), np.abs(r_full).max()) <= 1e-10


def test_coordinate_maps_roundtrip(circle_nf, rng):
    for _ in range(20):
        v = 0.2 * rng.standard_normal(2)
        x, y = circle_nf.to_normal(v)
        np.testing.assert_allclose(circle_nf.from_normal(x, y), v, atol=1e-10)
        s = circle_nf.reduced_state(x, y)
        np.testing.assert_allclose(circle_nf.full_from_reduced(s), v,
                                   atol=1e-10)


def test_split_against_projections(circle_nf, rng):
    for _ in range(10):
        v = 0.1 * rng.standard_normal(2)
        x, y = circle_nf.to_normal(v)
        np.testing.assert_allclose(x, circle_nf.sd.P_c @ v, atol=1e-14)
        # y is the stable deviation measured from the graph
        np.testing.assert_allclose(
            y, circle_nf.sd.P_s @ v - circle_nf.chart.phi(x), atol=1e-14)


def test_gate_rejects_far_coordinates(circle_nf):
    with pytest.raises(OutsideChart):
        circle_nf.T(np.array([0.0, 2.0 * circle_nf.chart.rho0]), np.zeros(2))


def test_linear_problem_has_no_nonlinearity():
    p = model.get_gallery_problem("gap-fail")
    sp = model.shift_to_deviation(p, np.zeros(2))
    sd = spectral.linearize(sp)
    chart = manifold.build_graph_map(sp, sd, rho_request=0.2)
    norms = spectral.build_norm_suite(sd)
    nf = normalform.NormalFormSystem(sp, sd, chart, norms)
    t_full, r_full = nf.t_and_r(0.1 * sd.kernel_basis[:, 0],
                                0.05 * sd.stable_basis[:, 0])
    assert np.linalg.norm(t_full) == 0.0
    assert np.linalg.norm(r_full) == 0.0
    st = normalform.estimate_structure_constants(nf, eta=0.05, r=0.15,
                                                 n_samples=400, seed=3)
    assert st.beta == 0.0 and st.C1 == 0.0


def test_structure_constants_bound_fresh_samples(stable_states):
    # beta was taken as a sup over a large certified sample; a smaller fresh
    # draw from the same ball must stay below it
    for name, state in stable_states.items():
        st = state.struct
        fresh = normalform.estimate_structure_constants(
            state.nf, eta=st.eta, r=st.r, n_samples=1000, seed=20250814,
            M0=state.maxreg.M0)
        assert fresh.beta <= st.beta * (1.0 + 1e-12), name
        assert fresh.C1 <= st.C1 * (1.0 + 0.35) + 1e-12, name


def test_smallness_certified_for_stable_gallery(stable_states):
    for name, state in stable_states.items():
        st = state.struct
        assert st.smallness_ok, name
        assert st.M0beta <= 0.5 + 1e-15, name
        assert st.rho > 0 and st.r > 0 and st.eta > 0, name


def test_structure_constants_are_seeded(circle_nf):
    a = normalform.estimate_structure_constants(circle_nf, eta=0.1, r=0.3,
                                                n_samples=500, seed=9)
    b = normalform.estimate_structure_constants(circle_nf, eta=0.1, r=0.3,
                                                n_samples=500, seed=9)
    assert a.beta == b.beta and a.C1 == b.C1 and a.C2 == b.C2


def test_smallness_search_shrinks_when_needed(circle_nf):
    # with a gigantic M0 the search must still return a certified
    # configuration, necessarily at a much smaller radius
    st_small = normalform.search_smallness(circle_nf, M0=1.0, n_scan=300,
                                           n_final=600, seed=0)
    st_big = normalform.search_smallness(circle_nf, M0=50.0, n_scan=300,
                                         n_final=600, seed=0)
    assert st_small.smallness_ok and st_big.smallness_ok
    assert st_big.M0beta <= 0.5 + 1e-15
    assert st_big.r <= st_small.r
