import math

import numpy as np
import pytest

from newton_incl.catalog import catalog, get_problem
from newton_incl.certify import compute_b
from newton_incl.cone import ProductCone
from newton_incl.expr import Const, Var
from newton_incl.majorant import MajorantDomainError, QuadraticMajorant, SmaleMajorant, majorant_sequence
from newton_incl.problems import InclusionProblem, eval_F, eval_jacobian, scale_problem
from newton_incl.solver import (
    CONVERGED_RESIDUAL,
    MAX_ITER,
    STEP_FAILURE,
    DomainError,
    SolveConfig,
    TraceMismatchError,
    newton_solve,
    region_K_check,
    verify_majorant_bounds,
)


def test_sqrt2_iterates():
    trace = newton_solve(get_problem("sqrt2"), [1.5])
    xs = [float(x[0]) for x in trace.iterates]
    assert xs[1] == pytest.approx(1.5 - 0.25 / 3.0, abs=1e-15)
    assert xs[2] == pytest.approx(1.4142156862745099, abs=1e-12)
    assert trace.status == CONVERGED_RESIDUAL
    assert trace.iterations <= 5
    # residual 4.5e-12 at x_3 already meets the default 1e-10
    assert trace.x[0] == pytest.approx(math.sqrt(2.0), abs=1e-11)


def test_sqrt2_to_machine_precision():
    trace = newton_solve(get_problem("sqrt2"), [1.5], SolveConfig(residual_tol=1e-14))
    assert trace.status == CONVERGED_RESIDUAL
    assert trace.iterations == 4
    assert trace.x[0] == pytest.approx(math.sqrt(2.0), abs=5e-16)


def test_sqrt2_smale_bounds():
    p = get_problem("sqrt2")
    spec = SmaleMajorant(1.0 / 3.0, compute_b(p))
    config = SolveConfig(residual_tol=1e-12, record_bounds=True)
    trace = newton_solve(p, p.x_tilde, config, majorant=spec)
    assert trace.iterations <= 6
    assert trace.residuals[-1] <= 1e-12
    assert all(rec["step_le_gap"] for rec in trace.bound_checks)
    mtrace = majorant_sequence(spec)
    report = verify_majorant_bounds(trace, mtrace, 0.38681)
    assert report.passed, report.violations
    assert abs(1.5 - math.sqrt(2.0)) <= mtrace.t_star + 1e-6
    for x in trace.iterates:
        assert np.linalg.norm(x - p.x_tilde) < mtrace.t_star + 1e-9


def test_affine_converges_in_one_step():
    trace = newton_solve(get_problem("ineq-line"), [1.0, 1.0])
    assert trace.status == CONVERGED_RESIDUAL
    assert trace.iterations == 1
    assert trace.x == pytest.approx([0.5, 0.5], abs=1e-12)


def test_feasible_start_takes_no_step():
    trace = newton_solve(get_problem("ineq-line"), [0.25, 0.25])
    assert trace.status == CONVERGED_RESIDUAL
    assert trace.iterations == 0
    assert len(trace.iterates) == 1


def test_matches_textbook_newton_on_square_system():
    p = get_problem("system-2x2")
    config = SolveConfig(max_iter=6, residual_tol=0.0, step_tol=0.0)
    trace = newton_solve(p, p.x_tilde, config)
    x = p.x_tilde.copy()
    for k in range(1, len(trace.iterates)):
        x = x + np.linalg.solve(eval_jacobian(p, x), -eval_F(p, x))
        assert trace.iterates[k] == pytest.approx(x, abs=1e-10)
    assert trace.x == pytest.approx(p.expected["solution"], abs=1e-12)


def test_invariant_under_positive_scaling():
    rng = np.random.default_rng(17)
    config = SolveConfig(max_iter=8, residual_tol=1e-14, step_tol=0.0)
    for p in catalog():
        scaled = scale_problem(p, rng.uniform(0.5, 3.0, size=p.m))
        a = newton_solve(p, p.x_tilde, config).iterates
        b = newton_solve(scaled, p.x_tilde, config).iterates
        k = min(len(a), len(b))
        assert k >= 2
        for xa, xb in zip(a[:k], b[:k]):
            assert np.linalg.norm(xa - xb) <= 1e-9 * max(1.0, np.linalg.norm(xa))


def test_no_real_root_hits_max_iter():
    p = InclusionProblem(n=1, cone=ProductCone(0, 1), F=(Var(0) ** 2 + Const(1.0),), x_tilde=[0.3], R=1.0)
    trace = newton_solve(p, [0.3], SolveConfig(max_iter=10))
    assert trace.status == MAX_ITER
    assert not trace.converged


def test_step_failure_when_linearization_is_infeasible():
    # x^2 + 1 <= 0 linearized at 0 is 1 <= 0
    p = InclusionProblem(n=1, cone=ProductCone(1, 0), F=(Var(0) ** 2 + Const(1.0),), x_tilde=[0.0], R=1.0)
    trace = newton_solve(p, [0.0])
    assert trace.status == STEP_FAILURE
    assert trace.iterations == 0
    assert "k=0" in trace.message


def test_bad_start_point():
    p = get_problem("sqrt2")
    with pytest.raises(DomainError):
        newton_solve(p, [1.0, 2.0])
    with pytest.raises(DomainError):
        newton_solve(p, [float("nan")])


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolveConfig(residual_tol=-1.0)


def test_trace_frame_and_dict():
    trace = newton_solve(get_problem("sqrt2"), [1.5])
    df = trace.to_frame()
    assert list(df.columns) == ["k", "step_norm", "residual"]
    assert len(df) == len(trace.iterates)
    d = trace.to_dict()
    assert d["status"] == CONVERGED_RESIDUAL
    assert len(d["iterates"]) == len(d["residuals"]) == len(d["step_norms"]) + 1


def test_wrong_L_is_reported():
    p = get_problem("cubic")
    trace = newton_solve(p, p.x_tilde)
    report = verify_majorant_bounds(trace, majorant_sequence(QuadraticMajorant(0.05, compute_b(p))), None)
    assert not report.passed
    assert any(v.check == "step_le_gap" for v in report.violations)
    summary = report.summary()
    assert set(summary.columns) == {"check", "passed", "failed"}


def test_exact_L_bounds_hold_on_catalog():
    for name in ("sqrt2", "cubic", "ineq-circle"):
        p = get_problem(name)
        spec = QuadraticMajorant(p.expected["L"], compute_b(p))
        trace = newton_solve(p, p.x_tilde)
        report = verify_majorant_bounds(trace, majorant_sequence(spec), None)
        assert report.passed, (name, report.violations)


def test_trace_mismatch():
    p = get_problem("sqrt2")
    trace = newton_solve(p, [1.5])
    trace.step_norms.append(1.0)
    with pytest.raises(TraceMismatchError):
        verify_majorant_bounds(trace, majorant_sequence(QuadraticMajorant(2 / 3, 1 / 12)), None)


def test_region_K():
    p = get_problem("sqrt2")
    spec = SmaleMajorant(1.0 / 3.0, compute_b(p))
    assert region_K_check(p, p.x_tilde, 0.0, spec)
    x1 = newton_solve(p, p.x_tilde, SolveConfig(max_iter=1)).iterates[1]
    t1 = majorant_sequence(spec).t[1]
    assert region_K_check(p, x1, t1, spec)
    assert not region_K_check(p, p.x_tilde + 0.3, 0.05, spec)
    with pytest.raises(MajorantDomainError):
        region_K_check(p, p.x_tilde, 1.0, spec)
