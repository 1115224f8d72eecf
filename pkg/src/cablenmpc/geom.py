"""SO(3), S^2 and quaternion primitives plus a fixed-step RK4 integrator.

Quaternions are stored scalar-first, ``q = [w, x, y, z]``, Hamilton
convention, and canonicalized to the hemisphere ``w >= 0``.  The
``_``-prefixed functions are numba-compatible kernels that take float64
arrays; the public wrappers accept anything array-like.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ._jit import kernel

Array = np.ndarray

SMALL_ANGLE = 1e-6


class IntegrationError(FloatingPointError):
    """Raised when an integrator encounters a non-finite derivative."""


# ---------------------------------------------------------------- kernels


@kernel
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@kernel
def _hat(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@kernel
def _vee(m):
    out = np.empty(3)
    out[0] = m[2, 1]
    out[1] = m[0, 2]
    out[2] = m[1, 0]
    return out


@kernel
def _quat_mul(a, b):
    out = np.empty(4)
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


@kernel
def _quat_conj(q):
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@kernel
def _quat_canonical(q):
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    out = q / n
    if out[0] < 0.0:
        out = -out
    return out


@kernel
def _quat_left(q):
    """Matrix L(q) with q ⊗ p = L(q) p."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    m = np.empty((4, 4))
    m[0, 0] = w
    m[0, 1] = -x
    m[0, 2] = -y
    m[0, 3] = -z
    m[1, 0] = x
    m[1, 1] = w
    m[1, 2] = -z
    m[1, 3] = y
    m[2, 0] = y
    m[2, 1] = z
    m[2, 2] = w
    m[2, 3] = -x
    m[3, 0] = z
    m[3, 1] = -y
    m[3, 2] = x
    m[3, 3] = w
    return m


@kernel
def _quat_right(p):
    """Matrix R(p) with q ⊗ p = R(p) q."""
    w, x, y, z = p[0], p[1], p[2], p[3]
    m = np.empty((4, 4))
    m[0, 0] = w
    m[0, 1] = -x
    m[0, 2] = -y
    m[0, 3] = -z
    m[1, 0] = x
    m[1, 1] = w
    m[1, 2] = z
    m[1, 3] = -y
    m[2, 0] = y
    m[2, 1] = -z
    m[2, 2] = w
    m[2, 3] = x
    m[3, 0] = z
    m[3, 1] = y
    m[3, 2] = -x
    m[3, 3] = w
    return m


@kernel
def _quat_log(q):
    # scale-invariant: only the direction of q matters
    w = q[0]
    v = q[1:4].copy()
    if w < 0.0:
        w = -w
        v = -v
    s = np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    nq = np.sqrt(w * w + s * s)
    theta = 2.0 * np.arctan2(s, w)
    if theta < SMALL_ANGLE:
        wn = w / nq
        r = s / (nq * wn)
        return v * (2.0 / (nq * wn)) * (1.0 - r * r / 3.0)
    return v * (theta / s)


@kernel
def _quat_exp(phi):
    theta = np.sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    out = np.empty(4)
    if theta < SMALL_ANGLE:
        k = 0.5 - theta * theta / 48.0
        out[0] = 1.0 - theta * theta / 8.0
    else:
        k = np.sin(0.5 * theta) / theta
        out[0] = np.cos(0.5 * theta)
    out[1] = k * phi[0]
    out[2] = k * phi[1]
    out[3] = k * phi[2]
    return out


@kernel
def _quat_to_rot(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    r = np.empty((3, 3))
    r[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    r[0, 1] = 2.0 * (x * y - w * z)
    r[0, 2] = 2.0 * (x * z + w * y)
    r[1, 0] = 2.0 * (x * y + w * z)
    r[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    r[1, 2] = 2.0 * (y * z - w * x)
    r[2, 0] = 2.0 * (x * z - w * y)
    r[2, 1] = 2.0 * (y * z + w * x)
    r[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return r


@kernel
def _rot_to_quat(r):
    # Shepperd's method
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    q = np.empty(4)
    if tr > 0.0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q[0] = 0.25 * s
        q[1] = (r[2, 1] - r[1, 2]) / s
        q[2] = (r[0, 2] - r[2, 0]) / s
        q[3] = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q[0] = (r[2, 1] - r[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (r[0, 1] + r[1, 0]) / s
        q[3] = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q[0] = (r[0, 2] - r[2, 0]) / s
        q[1] = (r[0, 1] + r[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (r[1, 2] + r[2, 1]) / s
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q[0] = (r[1, 0] - r[0, 1]) / s
        q[1] = (r[0, 2] + r[2, 0]) / s
        q[2] = (r[1, 2] + r[2, 1]) / s
        q[3] = 0.25 * s
    return _quat_canonical(q)


@kernel
def _so3_right_jac_inv(phi):
    """Inverse right Jacobian: Log(Exp(phi) Exp(d)) ≈ phi + Jr⁻¹(phi) d."""
    theta = np.sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    h = _hat(phi)
    if theta < 1e-4:
        c = 1.0 / 12.0 + theta * theta / 720.0
    else:
        c = 1.0 / (theta * theta) - (1.0 + np.cos(theta)) / (
            2.0 * theta * np.sin(theta)
        )
    return np.eye(3) + 0.5 * h + c * (h @ h)


# ---------------------------------------------------------------- public API


def _vec(v, n):
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {a.shape}")
    return a


def hat(v) -> Array:
    """Skew-symmetric matrix with ``hat(v) @ b == cross(v, b)``."""
    return _hat(_vec(v, 3))


def vee(m) -> Array:
    """Inverse of :func:`hat`."""
    return _vee(np.asarray(m, dtype=np.float64))


def quat_identity() -> Array:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_canonical(q) -> Array:
    """Normalize ``q`` and flip it into the ``w >= 0`` hemisphere."""
    q = _vec(q, 4)
    if not np.all(np.isfinite(q)) or np.linalg.norm(q) == 0.0:
        raise ValueError("quaternion must be finite and non-zero")
    return _quat_canonical(q)


def quat_mul(a, b) -> Array:
    """Hamilton product ``a ⊗ b``, returned in canonical form."""
    return _quat_canonical(_quat_mul(_vec(a, 4), _vec(b, 4)))


def quat_inv(q) -> Array:
    return _quat_canonical(_quat_conj(_vec(q, 4)))


def quat_log(q) -> Array:
    """Rotation vector ``theta * axis`` with ``theta`` in [0, pi]."""
    return _quat_log(_vec(q, 4))


def quat_exp(phi) -> Array:
    return _quat_canonical(_quat_exp(_vec(phi, 3)))


def quat_to_rot(q) -> Array:
    return _quat_to_rot(_quat_canonical(_vec(q, 4)))


def rot_to_quat(r) -> Array:
    return _rot_to_quat(np.asarray(r, dtype=np.float64))


def quat_rotate(q, v) -> Array:
    """Rotate ``v`` by the sandwich product ``q ⊗ [0, v] ⊗ q*``."""
    q = _vec(q, 4)
    p = np.concatenate(([0.0], _vec(v, 3)))
    return _quat_mul(_quat_mul(q, p), _quat_conj(q))[1:] / np.dot(q, q)


def quat_from_axis_angle(axis, angle: float) -> Array:
    axis = _vec(axis, 3)
    axis = axis / np.linalg.norm(axis)
    return quat_exp(axis * angle)


def so3_right_jac_inv(phi) -> Array:
    return _so3_right_jac_inv(_vec(phi, 3))


def rk4_step(f: Callable, x, u, dt: float) -> Array:
    """One classical Runge-Kutta step of ``xdot = f(x, u)`` with held ``u``."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=np.float64)
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise IntegrationError("non-finite derivative during RK4 step")
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
