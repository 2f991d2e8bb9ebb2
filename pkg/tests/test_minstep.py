import numpy as np
import pytest
from scipy.linalg import null_space
from scipy.optimize import minimize

from newton_incl.cone import ProductCone, distance_to_cone
from newton_incl.minstep import (
    InfeasibleSubproblemError,
    InvalidSubproblemError,
    LinearInclusionSubproblem,
    min_norm_step,
    sublinear_image_norm,
)


def sub(J, F, p, q):
    return LinearInclusionSubproblem(np.array(J, dtype=float), np.array(F, dtype=float), ProductCone(p, q))


def test_scalar_equality():
    step = min_norm_step(sub([[3.0]], [0.25], 0, 1))
    assert step.d[0] == pytest.approx(-0.25 / 3.0, abs=1e-14)
    assert step.norm_d == pytest.approx(1.0 / 12.0, abs=1e-14)


def test_inequality_inactive_gives_zero_step():
    step = min_norm_step(sub([[1.0, 0.0]], [-1.0], 1, 0))
    assert step.norm_d == 0.0
    assert step.multipliers[0] == 0.0


def test_inequality_active():
    step = min_norm_step(sub([[1.0, 0.0]], [1.0], 1, 0))
    assert step.d == pytest.approx([-1.0, 0.0], abs=1e-12)
    assert step.active_set == (0,)
    assert step.multipliers[0] == pytest.approx(1.0, abs=1e-12)


def test_mixed_line():
    # x0 + x1 - 1 <= 0, x0 - x1 = 0 linearized at (1, 1)
    step = min_norm_step(sub([[1.0, 1.0], [1.0, -1.0]], [1.0, 0.0], 1, 1))
    assert step.d == pytest.approx([-0.5, -0.5], abs=1e-12)
    assert step.norm_d == pytest.approx(np.sqrt(0.5), abs=1e-12)


def test_square_matches_direct_solve():
    rng = np.random.default_rng(3)
    for _ in range(50):
        J = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
        F = rng.normal(size=3)
        step = min_norm_step(sub(J, F, 0, 3))
        direct = np.linalg.solve(J, -F)
        assert np.linalg.norm(step.d - direct) <= 1e-10 * max(1.0, np.linalg.norm(direct))


def test_fixed_row_infeasible():
    with pytest.raises(InfeasibleSubproblemError) as exc:
        min_norm_step(sub([[0.0]], [1.0], 1, 0))
    assert exc.value.kind == "inequality"


def test_inconsistent_equalities():
    with pytest.raises(InfeasibleSubproblemError) as exc:
        min_norm_step(sub([[1.0], [1.0]], [1.0, 2.0], 0, 2))
    assert exc.value.kind == "equality"
    # y = residual is orthogonal to range(J) and y . F != 0
    y = exc.value.certificate
    assert abs(y @ np.array([1.0, 1.0])) <= 1e-12
    assert abs(y @ np.array([1.0, 2.0])) > 1e-6


def test_opposing_inequalities_infeasible():
    # d <= -1 and -d <= -1
    J, F = np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    with pytest.raises(InfeasibleSubproblemError) as exc:
        min_norm_step(sub(J, F, 2, 0))
    assert exc.value.kind == "inequality"
    y = exc.value.certificate
    assert y.shape == (2,)
    assert np.all(y >= 0)
    assert np.linalg.norm(J.T @ y) <= 1e-10
    assert y @ F > 0.5


def test_inequalities_infeasible_on_equality_line():
    # d0 <= -1, d1 <= -1 and d0 + d1 = 0
    J = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    F = np.array([1.0, 1.0, 0.0])
    with pytest.raises(InfeasibleSubproblemError) as exc:
        min_norm_step(sub(J, F, 2, 1))
    assert exc.value.kind == "inequality"
    y = exc.value.certificate
    assert np.all(y >= 0)
    # J_p^T y must be orthogonal to the line direction (1, -1)
    assert abs((J[:2].T @ y) @ np.array([1.0, -1.0])) <= 1e-10
    assert y @ F[:2] > 0.5


def test_least_norm_picks_binding_row():
    J = [[0.41732532254068], [0.6929119332721315]]
    F = [0.5114515299120972, 0.5517920692331272]
    step = min_norm_step(sub(J, F, 2, 0))
    expected = -F[0] / J[0][0]
    assert step.d[0] == pytest.approx(expected, abs=1e-12)
    assert step.active_set == (0,)
    assert step.multipliers[1] == 0.0
    assert step.multipliers[0] > 0.0



def test_invalid_data():
    with pytest.raises(InvalidSubproblemError):
        sub([[np.nan]], [1.0], 0, 1)
    with pytest.raises(InvalidSubproblemError):
        sub([[1.0, 2.0]], [1.0, 2.0], 0, 1)


def test_sublinear_image_norm():
    cone = ProductCone(1, 0)
    assert sublinear_image_norm(np.array([[1.0]]), cone, np.array([0.0])) == 0.0
    assert sublinear_image_norm(np.array([[1.0]]), cone, np.array([-3.0])) == pytest.approx(3.0)
    assert sublinear_image_norm(np.array([[0.0]]), ProductCone(0, 1), np.array([1.0])) == np.inf


def test_scaling_and_homogeneity():
    rng = np.random.default_rng(11)
    for _ in range(100):
        J = rng.normal(size=(3, 3))
        F = rng.normal(size=3)
        base = min_norm_step(sub(J, F, 2, 1))
        D = np.diag(rng.uniform(0.5, 4.0, size=3))
        scaled = min_norm_step(sub(D @ J, D @ F, 2, 1))
        assert np.linalg.norm(scaled.d - base.d) <= 1e-9 * max(1.0, base.norm_d)
        alpha = float(rng.uniform(0.1, 5.0))
        homog = min_norm_step(sub(J, alpha * F, 2, 1))
        assert np.linalg.norm(homog.d - alpha * base.d) <= 1e-9 * max(1.0, alpha * base.norm_d)


def _feasible_subproblem(rng):
    """Random subproblem built around a known feasible d0."""
    while True:
        n = int(rng.integers(1, 4))
        p = int(rng.integers(0, 3))
        q = int(rng.integers(0, min(n, 1) + 1))
        if p + q:
            break
    J = rng.normal(size=(p + q, n))
    d0 = rng.normal(size=n)
    F = np.empty(p + q)
    F[:p] = -J[:p] @ d0 - rng.random(p)
    F[p:] = -J[p:] @ d0
    return sub(J, F, p, q), d0


def _feasible_samples(s, d, d0, rng, count=10_000):
    """Points around d and d0 moved inside the equality manifold; only the feasible ones are kept."""
    G, h, A, _ = s.split()
    Z = null_space(A) if A.shape[0] else np.eye(s.n)
    radius = max(1.0, float(np.linalg.norm(d - d0)))
    coef = rng.normal(size=(count, Z.shape[1])) * (radius * rng.random((count, 1)))
    centers = np.where(rng.random((count, 1)) < 0.5, d[None, :], d0[None, :])
    pts = np.vstack([centers + coef @ Z.T, d0])
    if G.shape[0]:
        pts = pts[np.all(pts @ G.T - h <= 0.0, axis=1)]
    return pts


def test_kkt_and_optimality_random():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        s, d0 = _feasible_subproblem(rng)
        step = min_norm_step(s)
        d, p = step.d, s.cone.p
        scale = max(1.0, float(np.linalg.norm(d)), float(np.linalg.norm(step.multipliers)))

        assert distance_to_cone(s.cone, s.Fval + s.J @ d) <= 1e-9 * s.scale
        G, h, A, _ = s.split()
        mu, nu = step.multipliers[:p], step.multipliers[p:]
        assert np.all(mu >= -1e-12)
        assert np.linalg.norm(d + G.T @ mu + A.T @ nu) <= 1e-9 * scale
        assert np.all(np.abs(mu * (G @ d - h)) <= 1e-9 * scale)

        # no feasible point is shorter, and d solves the variational inequality
        pts = _feasible_samples(s, d, d0, rng)
        assert len(pts) >= 1
        gaps = np.linalg.norm(pts - d, axis=1)
        assert np.all(np.linalg.norm(pts, axis=1) >= step.norm_d - 1e-9 * scale)
        assert np.all((pts - d) @ d >= -1e-8 * scale * (1.0 + gaps))


def test_matches_slsqp_random():
    rng = np.random.default_rng(335)
    compared = 0
    for _ in range(300):
        s, d0 = _feasible_subproblem(rng)
        step = min_norm_step(s)
        G, h, A, c = s.split()
        constraints = []
        if G.shape[0]:
            constraints.append({"type": "ineq", "fun": lambda x, G=G, h=h: h - G @ x, "jac": lambda x, G=G: -G})
        if A.shape[0]:
            constraints.append({"type": "eq", "fun": lambda x, A=A, c=c: A @ x - c, "jac": lambda x, A=A: A})
        res = minimize(
            lambda x: 0.5 * x @ x,
            d0,
            jac=lambda x: x,
            constraints=constraints,
            method="SLSQP",
            options={"ftol": 1e-14, "maxiter": 500},
        )
        if not res.success:
            continue
        compared += 1
        assert step.norm_d <= np.linalg.norm(res.x) + 1e-6
        assert np.linalg.norm(step.d - res.x) <= 1e-5 * max(1.0, step.norm_d)
    assert compared >= 250

