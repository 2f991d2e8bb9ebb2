import numpy as np
import pytest

from newton_incl.cone import ConeDimensionError, ProductCone, contains, distance_to_cone, residual


def test_contains_examples():
    assert contains(ProductCone(2, 1), [-1.0, 0.0, 0.0])
    assert not contains(ProductCone(2, 1), [-1.0, 0.5, 0.0])
    assert contains(ProductCone(0, 2), [1e-12, -1e-12], tol=1e-10)
    assert not contains(ProductCone(0, 2), [1e-12, -1e-12])


def test_distance_examples():
    assert distance_to_cone(ProductCone(1, 1), [3.0, 4.0]) == pytest.approx(5.0)
    assert distance_to_cone(ProductCone(1, 1), [-3.0, 4.0]) == pytest.approx(4.0)
    assert distance_to_cone(ProductCone(2, 0), [-1.0, -2.0]) == 0.0


def test_residual_keeps_equality_rows():
    r = residual(ProductCone(2, 1), [-1.0, 2.0, -3.0])
    assert r.tolist() == [0.0, 2.0, -3.0]


def test_dimension_mismatch():
    with pytest.raises(ConeDimensionError):
        contains(ProductCone(1, 1), [1.0, 2.0, 3.0])
    with pytest.raises(ConeDimensionError):
        distance_to_cone(ProductCone(1, 0), [])


def test_invalid_cone():
    with pytest.raises(ValueError):
        ProductCone(0, 0)
    with pytest.raises(ValueError):
        ProductCone(-1, 2)


def test_negative_tol_rejected():
    with pytest.raises(ValueError):
        contains(ProductCone(1, 0), [0.0], tol=-1.0)


def test_distance_properties_random():
    rng = np.random.default_rng(0)
    for _ in range(500):
        p, q = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        if p + q == 0:
            continue
        cone = ProductCone(p, q)
        v = rng.normal(size=p + q)
        d = distance_to_cone(cone, v)
        assert d >= 0.0
        # v - residual(v) is the projection and lies in C
        assert contains(cone, v - residual(cone, v), tol=1e-12)
        assert (d == 0.0) == contains(cone, v)
        # no point of C sampled nearby is closer than the projection
        proj = v - residual(cone, v)
        for _ in range(5):
            c = proj.copy()
            c[:p] -= rng.random(p)
            assert np.linalg.norm(v - c) >= d - 1e-12


def test_residual_positively_homogeneous():
    rng = np.random.default_rng(7)
    for p, q in [(1, 0), (0, 2), (2, 1), (3, 3)]:
        cone = ProductCone(p, q)
        for _ in range(200):
            v = rng.normal(size=p + q)
            t = float(rng.choice([0.0, rng.exponential(3.0)]))
            np.testing.assert_allclose(residual(cone, t * v), t * residual(cone, v), rtol=1e-15, atol=0.0)
            assert distance_to_cone(cone, t * v) == pytest.approx(t * distance_to_cone(cone, v), rel=1e-14, abs=0.0)


def test_distance_is_minimal_over_cone_points():
    rng = np.random.default_rng(8)
    for p, q in [(1, 0), (0, 1), (2, 1), (3, 2)]:
        cone = ProductCone(p, q)
        for _ in range(20):
            v = 2.0 * rng.normal(size=p + q)
            d = distance_to_cone(cone, v)
            c = np.zeros((10_000, p + q))
            # half the inequality entries sit on the boundary
            c[:, :p] = -rng.exponential(2.0, size=(10_000, p)) * (rng.random((10_000, p)) < 0.5)
            assert all(contains(cone, row) for row in c[:50])
            assert np.all(np.linalg.norm(v[None, :] - c, axis=1) >= d - 1e-12)
