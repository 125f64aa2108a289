import numpy as np
import pytest

from conegraph.cones import (Cone, ConeError, ConeProduct, NonNegCone,
                             SecondOrderCone, ZeroCone, contains,
                             contains_product, project, project_dual,
                             project_product)
from oracles import soc_projection_qp

ALL_CONES = [ZeroCone(4), NonNegCone(4), SecondOrderCone(4)]


def _random_point(cone: Cone, rng) -> np.ndarray:
    return 3.0 * rng.standard_normal(cone.dim)


def test_nonneg_clamp():
    np.testing.assert_array_equal(project(NonNegCone(2), [-1.0, 2.0]), [0.0, 2.0])


def test_soc_interior_point_unchanged():
    v = np.array([2.0, 1.0, 0.0])
    np.testing.assert_array_equal(project(SecondOrderCone(3), v), v)


def test_soc_projection_formula_and_qp_oracle():
    v = np.array([0.0, 3.0, 4.0])
    p = project(SecondOrderCone(3), v)
    np.testing.assert_allclose(p, [2.5, 1.5, 2.0], atol=1e-12)
    np.testing.assert_allclose(p, soc_projection_qp(v), atol=1e-6)


def test_soc_polar_point_maps_to_origin():
    np.testing.assert_array_equal(project(SecondOrderCone(3), [-5.0, 1.0, 1.0]),
                                  np.zeros(3))


def test_soc_negative_t_zero_u_no_division():
    out = project(SecondOrderCone(3), [-1.0, 0.0, 0.0])
    np.testing.assert_array_equal(out, np.zeros(3))
    assert np.all(np.isfinite(out))


def test_soc_dim_one_is_halfline():
    assert project(SecondOrderCone(1), [-2.0])[0] == 0.0
    assert project(SecondOrderCone(1), [2.0])[0] == 2.0


def test_zero_cone():
    np.testing.assert_array_equal(project(ZeroCone(3), [1.0, -2.0, 3.0]), np.zeros(3))


def test_product_projection_blockwise():
    K = ConeProduct([NonNegCone(2), SecondOrderCone(3)])
    out = project_product(K, np.array([-1.0, 1.0, 0.0, 3.0, 4.0]))
    np.testing.assert_allclose(out, [0.0, 1.0, 2.5, 1.5, 2.0], atol=1e-12)


def test_product_zero_and_nonneg():
    K = ConeProduct([ZeroCone(1), NonNegCone(1)])
    np.testing.assert_array_equal(project_product(K, np.array([5.0, -5.0])), [0.0, 0.0])


def test_product_single_factor_reduces_to_project():
    K = ConeProduct([SecondOrderCone(3)])
    v = np.array([0.0, 3.0, 4.0])
    np.testing.assert_array_equal(project_product(K, v),
                                  project(SecondOrderCone(3), v))


def test_contains_boundary_cases():
    assert contains(NonNegCone(2), [0.0, 0.0], 0.0)
    assert not contains(SecondOrderCone(3), [1.0, 1.0, 0.1], 0.0)
    assert contains(SecondOrderCone(3), [5.0, 3.0, 4.0], 0.0)
    assert contains(ZeroCone(2), [0.0, 0.0], 0.0)
    assert not contains(ZeroCone(2), [1e-3, 0.0], 1e-6)


def test_dimension_mismatch():
    with pytest.raises(ConeError):
        project(NonNegCone(3), [1.0, 2.0])
    with pytest.raises(ConeError):
        project_product(ConeProduct([NonNegCone(2)]), np.ones(3))


def test_dual_projection():
    v = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(project_dual(ZeroCone(3), v), v)  # free
    np.testing.assert_array_equal(project_dual(NonNegCone(3), v),
                                  project(NonNegCone(3), v))


@pytest.mark.parametrize("cone", ALL_CONES, ids=lambda c: type(c).__name__)
def test_idempotence(cone):
    rng = np.random.default_rng(5)
    for _ in range(1000):
        v = _random_point(cone, rng)
        p = project(cone, v)
        np.testing.assert_allclose(project(cone, p), p, atol=1e-12)


@pytest.mark.parametrize("cone", ALL_CONES, ids=lambda c: type(c).__name__)
def test_nonexpansiveness(cone):
    rng = np.random.default_rng(6)
    for _ in range(1000):
        v, w = _random_point(cone, rng), _random_point(cone, rng)
        lhs = np.linalg.norm(project(cone, v) - project(cone, w))
        assert lhs <= np.linalg.norm(v - w) + 1e-12


@pytest.mark.parametrize("cone", [NonNegCone(4), SecondOrderCone(4)],
                         ids=lambda c: type(c).__name__)
def test_moreau_decomposition_self_dual(cone):
    rng = np.random.default_rng(8)
    for _ in range(1000):
        v = _random_point(cone, rng)
        recon = project(cone, v) - project(cone, -v)
        np.testing.assert_allclose(recon, v, atol=1e-12)


def test_moreau_decomposition_zero_cone_uses_dual():
    # the zero cone is not self-dual: v = proj_K(v) + proj_{K*}(v) with K* free
    rng = np.random.default_rng(9)
    cone = ZeroCone(4)
    for _ in range(100):
        v = _random_point(cone, rng)
        np.testing.assert_allclose(project(cone, v) + project_dual(cone, v), v,
                                   atol=1e-12)


@pytest.mark.parametrize("cone", ALL_CONES, ids=lambda c: type(c).__name__)
def test_projection_lands_inside(cone):
    rng = np.random.default_rng(10)
    for _ in range(1000):
        assert contains(cone, project(cone, _random_point(cone, rng)), 1e-9)


def test_projection_orthogonality():
    # <proj(v), v - proj(v)> = 0 characterizes the Euclidean projection
    rng = np.random.default_rng(11)
    for cone in ALL_CONES:
        for _ in range(200):
            v = _random_point(cone, rng)
            p = project(cone, v)
            assert abs(p @ (v - p)) <= 1e-10 * (1 + np.linalg.norm(v) ** 2)


def test_soc_matches_qp_oracle_batch():
    rng = np.random.default_rng(12)
    cone = SecondOrderCone(5)
    for _ in range(10):
        v = _random_point(cone, rng)
        np.testing.assert_allclose(project(cone, v), soc_projection_qp(v), atol=1e-5)


def test_product_membership():
    K = ConeProduct([ZeroCone(1), NonNegCone(2), SecondOrderCone(3)])
    assert K.total_dim == 6
    ok = np.array([0.0, 1.0, 0.0, 5.0, 3.0, 4.0])
    bad = np.array([0.0, -1.0, 0.0, 5.0, 3.0, 4.0])
    assert contains_product(K, ok, 0.0)
    assert not contains_product(K, bad, 1e-6)
