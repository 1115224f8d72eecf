import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import logm
from scipy.spatial.transform import Rotation

from cablenmpc import geom
from cablenmpc.geom import (IntegrationError, hat, quat_canonical, quat_exp, quat_inv,
                            quat_log, quat_mul, quat_rotate, quat_to_rot, rk4_step,
                            rot_to_quat, vee)

from .conftest import random_quat

finite3 = arrays(np.float64, 3, elements=st.floats(-10, 10))
quats = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(
    lambda q: np.linalg.norm(q) > 1e-3)


def test_hat_examples():
    assert np.array_equal(hat([1.0, 0.0, 0.0]),
                          [[0, 0, 0], [0, 0, -1], [0, 1, 0]])
    assert np.array_equal(hat(np.zeros(3)), np.zeros((3, 3)))


@given(finite3, finite3)
def test_hat_is_cross_product(v, b):
    assert np.allclose(hat(v) @ b, np.cross(v, b), atol=1e-12)
    assert np.allclose(hat(v) + hat(v).T, 0.0, atol=1e-12)
    assert np.allclose(vee(hat(v)), v, atol=1e-12)


def test_quat_mul_identity_and_inverse(rng):
    q = random_quat(rng)
    assert np.allclose(quat_mul(geom.quat_identity(), q), q)
    assert np.allclose(quat_mul(q, quat_inv(q)), [1, 0, 0, 0], atol=1e-12)


@given(quats, quats)
def test_quat_mul_matches_rotation_composition(a, b):
    a, b = quat_canonical(a), quat_canonical(b)
    Rab = quat_to_rot(quat_mul(a, b))
    assert np.allclose(Rab, quat_to_rot(a) @ quat_to_rot(b), atol=1e-10)


def test_quat_log_examples():
    assert np.array_equal(quat_log([1.0, 0, 0, 0]), np.zeros(3))
    q = [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)]
    assert np.allclose(quat_log(q), [0, 0, np.pi / 2], atol=1e-12)


def test_quat_log_matches_matrix_log(rng):
    for _ in range(50):
        q = random_quat(rng)
        L = np.real(logm(quat_to_rot(q)))
        assert np.allclose(quat_log(q), vee(L), atol=1e-9)


def test_log_exp_round_trip_1000(rng):
    for _ in range(1000):
        q = random_quat(rng)
        assert np.allclose(quat_exp(quat_log(q)), q, atol=1e-9)
    # tiny angles take the series branch
    q = quat_exp(np.array([1e-8, -2e-8, 3e-9]))
    assert np.allclose(quat_log(q), [1e-8, -2e-8, 3e-9], atol=1e-15)


@given(quats)
def test_canonical_is_unit_upper_hemisphere(q):
    c = quat_canonical(q)
    assert abs(np.linalg.norm(c) - 1.0) < 1e-9
    assert c[0] >= 0.0


def test_quat_to_rot_examples():
    assert np.allclose(quat_to_rot([1.0, 0, 0, 0]), np.eye(3))
    assert np.allclose(quat_to_rot([0.0, 1, 0, 0]), np.diag([1, -1, -1]), atol=1e-15)


def test_quat_to_rot_sandwich_and_orthonormal(rng):
    for _ in range(200):
        q = random_quat(rng)
        v = rng.normal(size=3)
        R = quat_to_rot(q)
        assert np.allclose(R @ v, quat_rotate(q, v), atol=1e-12)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1.0) < 1e-9
        # scalar-first convention vs scipy's scalar-last
        Rs = Rotation.from_quat(np.r_[q[1:], q[0]]).as_matrix()
        assert np.allclose(R, Rs, atol=1e-12)
        assert np.allclose(rot_to_quat(R), q, atol=1e-9)


def test_rk4_examples():
    c = np.array([1.0, -2.0])
    assert np.array_equal(rk4_step(lambda x, u: np.zeros(2), c, None, 0.1), c)
    v = np.array([0.3, 0.7])
    assert np.allclose(rk4_step(lambda x, u: v, c, None, 0.25), c + 0.25 * v, atol=1e-15)
    x1 = rk4_step(lambda x, u: -x, np.array([1.0]), None, 0.1)
    assert abs(x1[0] - np.exp(-0.1)) < 1e-7
    assert abs(x1[0] - 0.9048375) < 1e-7


def test_rk4_rejects_bad_input():
    with pytest.raises(ValueError):
        rk4_step(lambda x, u: x, np.ones(1), None, 0.0)
    with pytest.raises(IntegrationError):
        rk4_step(lambda x, u: x * np.nan, np.ones(1), None, 0.1)


def _decay_error(steps):
    x = np.array([1.0])
    dt = 1.0 / steps
    for _ in range(steps):
        x = rk4_step(lambda s, u: -s, x, None, dt)
    return abs(x[0] - np.exp(-1.0))


@pytest.mark.parametrize("steps", [10, 20, 40])
def test_rk4_global_order(steps):
    ratio = _decay_error(steps) / _decay_error(2 * steps)
    assert 14.0 <= ratio <= 18.0


@settings(max_examples=50)
@given(finite3)
def test_right_jacobian_inverse_is_inverse(phi):
    phi = phi / 10.0 * 3.0 / max(1.0, np.linalg.norm(phi) / 3.0)
    th = np.linalg.norm(phi)
    # closed-form right Jacobian as the oracle
    if th < 1e-8:
        Jr = np.eye(3)
    else:
        K = hat(phi)
        Jr = (np.eye(3) - (1 - np.cos(th)) / th**2 * K
              + (th - np.sin(th)) / th**3 * K @ K)
    assert np.allclose(geom.so3_right_jac_inv(phi) @ Jr, np.eye(3), atol=1e-8)
