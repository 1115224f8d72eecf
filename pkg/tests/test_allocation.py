import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import null_space

from cablenmpc.allocation import (build_allocation, distribute, min_norm_check,
                                  regular_polygon, robot_pos_load_frame)
from cablenmpc.errors import GeometryError, TensionFloorError
from cablenmpc.geom import hat


GRAVITY_WRENCH = np.array([0.0, 0.0, 2.27592, 0.0, 0.0, 0.0])


def test_equilateral_triangle_structure():
    model = build_allocation(regular_polygon(3, 0.25), np.ones(3))
    assert model.N.shape == (9, 3)
    for k in range(3):
        assert np.array_equal(model.P[:3, 3 * k:3 * k + 3], np.eye(3))
        assert np.array_equal(model.P[3:, 3 * k:3 * k + 3], hat(model.rho[k]))
    assert np.allclose(model.P @ model.P_pinv, np.eye(6), atol=1e-9)
    assert np.max(np.abs(model.P @ model.N)) <= 1e-10
    assert np.allclose(model.N.T @ model.N, np.eye(3), atol=1e-9)


def test_collinear_rejected():
    rho = [[-0.3, 0, 0], [0, 0, 0], [0.3, 0, 0]]
    with pytest.raises(GeometryError, match="collinear"):
        build_allocation(rho, np.ones(3))


def test_too_few_robots():
    with pytest.raises(GeometryError):
        build_allocation([[0, 0, 0], [1, 0, 0]], np.ones(2))


@pytest.mark.parametrize("n", [4, 5, 6, 8])
def test_null_dimension_against_svd(n):
    model = build_allocation(regular_polygon(n, 0.3), np.ones(n))
    ns = null_space(model.P)
    assert model.null_dim == 3 * n - 6 == ns.shape[1]
    assert np.max(np.abs(model.P @ model.N)) <= 1e-10
    # same subspace as an independent basis
    assert np.allclose(ns @ ns.T, model.N @ model.N.T, atol=1e-9)


def test_distribute_examples(tri_model):
    mu = distribute(GRAVITY_WRENCH, np.zeros(3), tri_model)
    assert np.allclose(mu, [[0, 0, 0.75864]] * 3, atol=1e-12)
    assert np.array_equal(distribute(np.zeros(6), np.zeros(3), tri_model), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        distribute(GRAVITY_WRENCH, np.zeros(4), tri_model)


def test_min_norm_examples(tri_model):
    assert min_norm_check(np.zeros(6), tri_model) == 0.0
    assert abs(min_norm_check(GRAVITY_WRENCH, tri_model) - np.sqrt(3) * 0.75864) < 1e-9
    assert abs(np.sqrt(3) * 0.75864 - 1.31400) < 1e-5


def test_robot_position_examples():
    assert np.allclose(robot_pos_load_frame([0, 0, 1], [0.25, 0, 0], 1.0), [0.25, 0, 1])
    assert np.allclose(robot_pos_load_frame([1, 0, 1], np.zeros(3), 1.0),
                       [0.70711, 0, 0.70711], atol=1e-5)
    with pytest.raises(TensionFloorError):
        robot_pos_load_frame([0, 0, 1e-9], np.zeros(3), 1.0)


@given(arrays(np.float64, 3, elements=st.floats(-5, 5)).filter(lambda v: np.linalg.norm(v) > 0.2),
       st.floats(0.01, 100.0))
def test_robot_position_direction_only(mu, scale):
    rho = np.array([0.1, -0.2, 0.0])
    a = robot_pos_load_frame(mu, rho, 0.8)
    b = robot_pos_load_frame(mu * scale, rho, 0.8, mu_min=1e-6)
    assert np.allclose(a, b, atol=1e-12)
    assert abs(np.linalg.norm(a - rho) - 0.8) < 1e-12


def test_allocation_randomized_10k():
    """Wrench invariance, min-norm optimality, P·N = 0 and residuals over
    10^4 random geometries, wrenches and null-space vectors."""
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    cases = 0
    while cases < 10_000:
        n = int(rng.integers(3, 9))
        rho = rng.uniform(-0.5, 0.5, size=(n, 3))
        try:
            model = build_allocation(rho, np.ones(n))
        except GeometryError:
            continue
        for _ in range(100):
            W = rng.normal(size=6)
            lam = rng.normal(size=model.null_dim)
            mu = model.P_pinv @ W + model.N @ lam
            assert np.max(np.abs(model.P @ mu - W)) <= 1e-9
            assert np.max(np.abs(model.N.T @ (model.P_pinv @ W))) <= 1e-9
            cases += 1
        assert np.max(np.abs(model.P @ model.N)) <= 1e-10
        assert np.allclose(model.P @ model.P_pinv, np.eye(6), atol=1e-9)
        # Pythagoras with the orthonormal basis, and 100 perturbations never beat min-norm
        W = rng.normal(size=6)
        base = min_norm_check(W, model)
        lams = rng.normal(size=(100, model.null_dim))
        norms = np.linalg.norm(model.P_pinv @ W + lams @ model.N.T, axis=1)
        assert np.all(norms > base)
        assert np.allclose(norms**2, base**2 + np.sum(lams**2, axis=1), rtol=1e-9)
    assert time.perf_counter() - t0 < 10.0


def test_basis_choice_does_not_change_tensions(tri_model, rng):
    """Re-randomizing the null basis leaves the set of reachable tensions intact."""
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    N2 = tri_model.N @ Q
    W = rng.normal(size=6)
    lam = rng.normal(size=3)
    mu1 = distribute(W, lam, tri_model).ravel()
    mu2 = tri_model.P_pinv @ W + N2 @ (Q.T @ lam)
    assert np.allclose(mu1, mu2, atol=1e-12)
    assert np.max(np.abs(tri_model.P @ N2)) <= 1e-10


def test_model_is_immutable(tri_model):
    with pytest.raises(ValueError):
        tri_model.P[0, 0] = 2.0
    assert abs(np.linalg.norm(tri_model.rho[0] - tri_model.rho[1]) - 0.53) < 1e-12
