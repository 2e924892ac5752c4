import json
import math

import numpy as np
import pytest

from normstab import dynamics, report
from normstab.errors import HorizonTooShort
from normstab.model import load_problem


def test_analyze_classifies_gallery():
    for name, stable in (("circle2d", True), ("sphere3d", True),
                         ("quasi-line", True), ("allen-cahn-const", True),
                         ("jordan-fail", False), ("gap-fail", False)):
        state = report.analyze_problem(load_problem(name))
        assert state.verdict.normally_stable == stable, name


def test_analyze_failure_conditions():
    v = report.analyze_problem(load_problem("jordan-fail")).verdict
    assert not v.condition_iii and v.condition_iv
    v = report.analyze_problem(load_problem("gap-fail")).verdict
    assert v.condition_iii and not v.condition_iv


def test_pipeline_exposes_constants(circle_state):
    d = circle_state.derived
    for key in ("M2", "M3", "M4", "delta"):
        assert d[key] > 0
    # delta = min(rho, rho0) / (2 M4) by construction
    expect = min(circle_state.struct.rho, circle_state.chart.rho0) / (
        2.0 * d["M4"])
    assert abs(d["delta"] - expect) <= 1e-15


def test_decay_rate_matches_gap(circle_state):
    state = circle_state
    x0 = 0.02 * state.sd.kernel_basis[:, 0]
    y0 = 0.03 * state.sd.stable_basis[:, 0]
    traj = dynamics.integrate_normal_form(state.nf, x0, y0, t_end=25.0,
                                          tol=1e-10)
    rate, M_emp = report.fit_decay_rate(traj, state.nf)
    assert 1.8 <= rate <= 2.2
    assert M_emp >= 1.0


def test_decay_rate_negative_under_growth():
    # the no-gap linear problem grows like e^t: the fit must report that
    # decay fails rather than produce a small positive rate
    from normstab import manifold, normalform, spectral
    from normstab.model import get_gallery_problem, shift_to_deviation
    p = get_gallery_problem("gap-fail")
    sp = shift_to_deviation(p, np.zeros(2))
    sd = spectral.linearize(sp)
    chart = manifold.build_graph_map(sp, sd, rho_request=0.2)
    nf = normalform.NormalFormSystem(sp, sd, chart,
                                     spectral.build_norm_suite(sd))
    traj = dynamics.integrate_normal_form(nf, np.zeros(2),
                                          1e-6 * sd.stable_basis[:, 0],
                                          t_end=8.0, tol=1e-10)
    rate, _ = report.fit_decay_rate(traj, nf)
    assert rate < 0


def test_predict_limit_quasi_line():
    p = load_problem("quasi-line")
    rep = report.verify_convergence(p, opts=report.VerifyOptions(seed=0))
    assert rep.passed
    np.testing.assert_allclose(rep.u_inf, [0.0, 1.3], atol=1e-6)


def test_predict_limit_requires_decayed_tail(circle_state):
    state = circle_state
    x0 = 0.02 * state.sd.kernel_basis[:, 0]
    y0 = 0.2 * state.sd.stable_basis[:, 0]
    traj = dynamics.integrate_normal_form(state.nf, x0, y0, t_end=0.5,
                                          tol=1e-9)
    with pytest.raises(HorizonTooShort):
        report.predict_limit(state.nf, traj)


def test_failed_verdict_short_report():
    rep = report.verify_convergence(load_problem("jordan-fail"),
                                    opts=report.VerifyOptions(seed=0))
    assert not rep.passed
    assert any("condition_iii" in f for f in rep.flags)
    assert rep.u_inf is None


def test_report_json_is_self_consistent(circle_state):
    rep = report.verify_convergence(load_problem("circle2d"),
                                    opts=report.VerifyOptions(seed=0))
    blob = json.loads(rep.to_json())
    assert blob["problem"]["name"] == "circle2d"
    assert blob["passed"] is True
    assert len(blob["checks"]) == len(rep.checks) >= 10
    names = [c["name"] for c in blob["checks"]]
    assert len(names) == len(set(names))
    for c in blob["checks"]:
        assert c["pass"] is True
    # serialized twice gives identical bytes
    assert rep.to_json() == rep.to_json()


def test_check_serialization_handles_infinity():
    c = report.Check("exit_time_infinite", True, math.inf, 1.0)
    d = c.as_dict()
    assert isinstance(d["measured"], str)  # inf marker survives strict JSON
    json.dumps(d)


def test_stability_sweep_small(circle_state):
    res = report.stability_sweep(circle_state, n=10, seed=5, t_end=30.0)
    assert res.n == res.n_converged == res.n_stayed == 10
    assert res.max_sup_norm <= res.r_ball
    assert res.max_limit_residual <= 1e-8
    assert res.all_ok and not res.failures


def test_gallery_outcome_matching(circle_state):
    rep = report.verify_convergence(load_problem("circle2d"),
                                    opts=report.VerifyOptions(seed=0))
    assert report.gallery_outcome(rep, "pass")
    assert not report.gallery_outcome(rep, "condition_iii")
    bad = report.verify_convergence(load_problem("gap-fail"),
                                    opts=report.VerifyOptions(seed=0))
    assert report.gallery_outcome(bad, "condition_iv")
    assert not report.gallery_outcome(bad, "pass")


def test_run_gallery_writes_reports(tmp_path):
    reports, matched = report.run_gallery(which="jordan-fail",
                                          report_dir=str(tmp_path), seed=0)
    assert list(reports) == ["jordan-fail"]
    blob = json.loads((tmp_path / "jordan-fail.json").read_text())
    assert blob["passed"] is False
    assert matched["jordan-fail"] is True
