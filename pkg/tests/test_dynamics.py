import math

import numpy as np
import pytest

from helpers import circle_setup, max_error
from normstab import dynamics, model, spectral, stepcore
from normstab.errors import StepSizeUnderflow


def test_radial_closed_form_accuracy():
    sp, v0, exact_v = circle_setup()
    traj = dynamics.integrate(sp, v0, t_end=10.0, tol=1e-8)
    assert max_error(traj, exact_v) <= 1e-7


def test_tolerance_halving_reduces_error():
    sp, v0, exact_v = circle_setup()
    e_coarse = max_error(dynamics.integrate(sp, v0, 10.0, tol=1e-6), exact_v)
    e_fine = max_error(dynamics.integrate(sp, v0, 10.0, tol=5e-7), exact_v)
    assert e_fine > 0
    assert e_coarse / e_fine >= 2.0


def test_integration_is_deterministic():
    sp, v0, _ = circle_setup()
    t1 = dynamics.integrate(sp, v0, 10.0, tol=1e-8)
    t2 = dynamics.integrate(sp, v0, 10.0, tol=1e-8)
    np.testing.assert_array_equal(t1.states, t2.states)
    np.testing.assert_array_equal(t1.times, t2.times)


def test_backends_agree():
    backends = stepcore.available_backends()
    if len(backends) < 2:
        pytest.skip("compiled stepper not built")
    sp, v0, _ = circle_setup()

    def run(impl):
        res = impl(lambda t, v: sp.rhs(v), lambda t, v: sp.rhs_jac(v),
                   np.asarray(v0, dtype=float), 0.0, 10.0, 1e-8, 0.0, 0.0,
                   100000)
        assert res["status"] == stepcore.STATUS_DONE
        return res["states"][-1]

    finals = [run(impl) for impl in backends.values()]
    assert np.abs(finals[0] - finals[1]).max() <= 1e-9


def test_dense_output_interpolates_nodes():
    sp, v0, exact_v = circle_setup()
    traj = dynamics.integrate(sp, v0, 5.0, tol=1e-8)
    k = traj.times.size // 2
    np.testing.assert_allclose(traj.eval(traj.times[k]).ravel(),
                               traj.states[k], atol=1e-14)
    with pytest.raises(ValueError):
        traj.eval(traj.times[-1] + 1.0)


def test_finite_time_blowup_reported():
    # dv/dt = v^2 from v = 1 blows up at t = 1; the divergence cap turns the
    # race to the pole into a prompt failure
    p = model.load_problem({"dim": 1, "field": ["-u[0]*u[0]"]})
    sp = model.shift_to_deviation(p, np.zeros(1))
    with pytest.raises(StepSizeUnderflow, match="blow-up"):
        dynamics.integrate(sp, np.array([1.0]), t_end=2.0, tol=1e-6, cap=50.0)


def test_domain_violation_propagates():
    p = model.get_gallery_problem("circle2d")  # validity ball |u| <= 6
    sp = model.shift_to_deviation(p, np.array([1.0, 0.0]))
    from normstab.errors import DomainViolation
    with pytest.raises(DomainViolation):
        dynamics.integrate(sp, np.array([7.0, 0.0]), t_end=1.0, tol=1e-8)


def test_stays_on_equilibrium_set(circle_state):
    # an initial point on the equilibrium set must not drift:
    # every circle point is stationary, so y(t) stays at integrator noise
    state = circle_state
    x0 = 0.3 * state.sd.kernel_basis[:, 0]
    v0 = x0 + state.chart.phi(x0)
    tol = 1e-8
    traj = dynamics.integrate(state.sp, v0, t_end=50.0, tol=tol)
    for v in traj.states[:: max(1, traj.times.size // 40)]:
        x, y = state.nf.to_normal(v)
        assert state.norms.norm_gamma(y) <= 10.0 * tol


def test_normal_form_integration_runs(circle_state):
    state = circle_state
    x0 = 0.05 * state.sd.kernel_basis[:, 0]
    y0 = 0.02 * state.sd.stable_basis[:, 0]
    traj = dynamics.integrate_normal_form(state.nf, x0, y0, t_end=5.0,
                                          tol=1e-9)
    assert traj.kind == "normal"
    assert traj.m == state.sd.m
    # stable block contracts
    eta0 = np.linalg.norm(traj.states[0, state.sd.m:])
    eta1 = np.linalg.norm(traj.states[-1, state.sd.m:])
    assert eta1 < 1e-3 * eta0


def test_exit_time_linear_growth():
    # gap-fail deviation: dv/dt = -Av with A = diag(-1, 0), so the first
    # component grows like e^t and the gamma-norm is 2 |v1|
    p = model.get_gallery_problem("gap-fail")
    sp = model.shift_to_deviation(p, np.zeros(2))
    sd = spectral.linearize(sp)
    norms = spectral.build_norm_suite(sd)
    eps = 1e-6
    traj = dynamics.integrate(sp, np.array([eps, 0.0]), t_end=14.0, tol=1e-10)
    rec = dynamics.exit_time(traj, norms, rho=0.1)
    assert rec.t_exit < math.inf
    assert abs(rec.t_exit - math.log(0.1 / (2.0 * eps))) <= 1e-5


def test_exit_time_infinite_for_decay(circle_state):
    state = circle_state
    v0 = 1e-3 * state.sd.stable_basis[:, 0]
    traj = dynamics.integrate(state.sp, v0, t_end=20.0, tol=1e-10)
    rec = dynamics.exit_time(traj, state.norms, rho=0.1)
    assert rec.t_exit == math.inf
    assert rec.sup_norm <= 3.1e-3


def test_trajectory_csv_roundtrip():
    sp, v0, _ = circle_setup()
    traj = dynamics.integrate(sp, v0, 1.0, tol=1e-8)
    text = traj.to_csv_string()
    lines = text.strip().splitlines()
    assert lines[0].startswith("t,")
    data = np.loadtxt(lines[1:], delimiter=",")
    assert data.shape == (traj.times.size, 1 + sp.dim)
    np.testing.assert_allclose(data[:, 0], traj.times, atol=1e-12)
    np.testing.assert_allclose(data[:, 1:], traj.states, atol=1e-12)
