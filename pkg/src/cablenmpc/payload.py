"""Rigid-body payload model used both by the NMPC and the simulator.

Payload state vectors are laid out as ``[x(3), q(4), v(3), omega(3)]``:
inertial position, attitude quaternion (load frame to inertial), inertial
velocity and body-frame angular velocity.  Error and tangent vectors use
the 12-dimensional ordering ``[position, velocity, attitude, angular rate]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geom
from ._jit import kernel
from .geom import _cross, _quat_conj, _quat_left, _quat_log, _quat_mul, _quat_right

STATE_DIM = 13
ERROR_DIM = 12
GRAVITY = 9.81

# slices into the 13-vector
POS = slice(0, 3)
QUAT = slice(3, 7)
VEL = slice(7, 10)
RATE = slice(10, 13)


@dataclass(frozen=True)
class PayloadParams:
    mass: float
    inertia: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, GRAVITY]))

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=np.float64)
        g = np.asarray(self.gravity, dtype=np.float64)
        if J.shape == (3,):
            J = np.diag(J)
        if not self.mass > 0.0:
            raise ValueError("payload mass must be positive")
        if J.shape != (3, 3) or not np.allclose(J, J.T, atol=1e-12, rtol=0.0):
            raise ValueError("payload inertia must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(J).min() <= 0.0:
            raise ValueError("payload inertia must be positive definite")
        object.__setattr__(self, "inertia", J)
        object.__setattr__(self, "gravity", g)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(J))


@dataclass
class PayloadState:
    position: np.ndarray
    quat: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0), quat=None) -> "PayloadState":
        q = geom.quat_identity() if quat is None else geom.quat_canonical(quat)
        return cls(np.array(position, dtype=float), q, np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, x) -> "PayloadState":
        x = np.asarray(x, dtype=np.float64)
        return cls(x[POS].copy(), x[QUAT].copy(), x[VEL].copy(), x[RATE].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.position, self.quat, self.velocity, self.omega))


@dataclass
class PayloadReference:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    quat: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray

    @classmethod
    def hold(cls, position, quat=None) -> "PayloadReference":
        z = np.zeros(3)
        q = geom.quat_identity() if quat is None else geom.quat_canonical(quat)
        return cls(np.array(position, dtype=float), z, z.copy(), q, z.copy(), z.copy())

    @classmethod
    def from_state(cls, state: PayloadState) -> "PayloadReference":
        z = np.zeros(3)
        return cls(state.position.copy(), state.velocity.copy(), z,
                   state.quat.copy(), state.omega.copy(), z.copy())

    def to_vector(self) -> np.ndarray:
        """Pack as ``[x, q, v, omega, a, omega_dot]`` (19 entries)."""
        return np.concatenate((self.position, self.quat, self.velocity, self.omega,
                               self.acceleration, self.omega_dot))


# ---------------------------------------------------------------- kernels


@kernel
def _payload_deriv(x, wrench, mass, J, Jinv, g):
    q = x[3:7]
    v = x[7:10]
    om = x[10:13]
    out = np.empty(13)
    out[0:3] = v
    pure = np.zeros(4)
    pure[1:4] = om
    out[3:7] = 0.5 * _quat_mul(q, pure)
    out[7:10] = wrench[0:3] / mass - g
    out[10:13] = Jinv @ (wrench[3:6] - _cross(om, J @ om))
    return out


@kernel
def _payload_jac(x, mass, J, Jinv):
    """Jacobians of the continuous dynamics w.r.t. the 13-state and the wrench."""
    q = x[3:7]
    om = x[10:13]
    A = np.zeros((13, 13))
    B = np.zeros((13, 6))
    for i in range(3):
        A[i, 7 + i] = 1.0
        B[7 + i, i] = 1.0 / mass
    pure = np.zeros(4)
    pure[1:4] = om
    A[3:7, 3:7] = 0.5 * _quat_right(pure)
    A[3:7, 10:13] = 0.5 * _quat_left(q)[:, 1:4]
    Jom = J @ om
    # d(om x J om)/d om = hat(om) J - hat(J om)
    dgyro = np.zeros((3, 3))
    for c in range(3):
        e = np.zeros(3)
        e[c] = 1.0
        dgyro[:, c] = _cross(e, Jom) + _cross(om, J[:, c])
    A[10:13, 10:13] = -(Jinv @ dgyro)
    B[10:13, 3:6] = Jinv
    return A, B


@kernel
def _rk4_sens(x, wrench, dt, mass, J, Jinv, g):
    """RK4 step (unnormalized) with forward sensitivities to state and wrench."""
    k1 = _payload_deriv(x, wrench, mass, J, Jinv, g)
    A1, B1 = _payload_jac(x, mass, J, Jinv)
    x2 = x + 0.5 * dt * k1
    k2 = _payload_deriv(x2, wrench, mass, J, Jinv, g)
    A2, B2 = _payload_jac(x2, mass, J, Jinv)
    x3 = x + 0.5 * dt * k2
    k3 = _payload_deriv(x3, wrench, mass, J, Jinv, g)
    A3, B3 = _payload_jac(x3, mass, J, Jinv)
    x4 = x + dt * k3
    k4 = _payload_deriv(x4, wrench, mass, J, Jinv, g)
    A4, B4 = _payload_jac(x4, mass, J, Jinv)

    I = np.eye(13)
    dk1x = A1
    dk1w = B1
    dk2x = A2 @ (I + 0.5 * dt * dk1x)
    dk2w = A2 @ (0.5 * dt * dk1w) + B2
    dk3x = A3 @ (I + 0.5 * dt * dk2x)
    dk3w = A3 @ (0.5 * dt * dk2w) + B3
    dk4x = A4 @ (I + dt * dk3x)
    dk4w = A4 @ (dt * dk3w) + B4

    h = dt / 6.0
    xn = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Phx = I + h * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x)
    Phw = h * (dk1w + 2.0 * dk2w + 2.0 * dk3w + dk4w)
    return xn, Phx, Phw


@kernel
def _normalize_state(x):
    out = x.copy()
    q = x[3:7]
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    s = 1.0 / n
    if q[0] < 0.0:
        s = -s
    out[3:7] = q * s
    return out


@kernel
def _retract(x, d):
    """x ⊕ d on R^3 x S^3 x R^6 with the tangent order [p, v, theta, omega]."""
    out = x.copy()
    out[0:3] = x[0:3] + d[0:3]
    out[7:10] = x[7:10] + d[3:6]
    dq = np.empty(4)
    th = np.sqrt(d[6] * d[6] + d[7] * d[7] + d[8] * d[8])
    if th < 1e-6:
        k = 0.5 - th * th / 48.0
        dq[0] = 1.0 - th * th / 8.0
    else:
        k = np.sin(0.5 * th) / th
        dq[0] = np.cos(0.5 * th)
    dq[1:4] = k * d[6:9]
    q = _quat_mul(x[3:7], dq)
    n = np.sqrt(np.sum(q * q))
    q = q / n
    if q[0] < 0.0:
        q = -q
    out[3:7] = q
    out[10:13] = x[10:13] + d[9:12]
    return out


@kernel
def _difference(a, b):
    """Tangent vector d with b ⊕ d = a."""
    d = np.empty(12)
    d[0:3] = a[0:3] - b[0:3]
    d[3:6] = a[7:10] - b[7:10]
    d[6:9] = _quat_log(_quat_mul(_quat_conj(b[3:7]), a[3:7]))
    d[9:12] = a[10:13] - b[10:13]
    return d


@kernel
def _state_error(x, ref):
    """Tracking error against a packed reference ``[x, q, v, omega, ...]``."""
    e = np.empty(12)
    e[0:3] = ref[0:3] - x[0:3]
    e[3:6] = ref[7:10] - x[7:10]
    if np.all(ref[3:7] == x[3:7]):
        # exact zero; fused multiply-adds can leave 1e-17 residue otherwise
        e[6:9] = 0.0
    else:
        e[6:9] = _quat_log(_quat_mul(_quat_conj(ref[3:7]), x[3:7]))
    e[9:12] = ref[10:13] - x[10:13]
    return e


# ---------------------------------------------------------------- public API


def payload_deriv(state, wrench, params: PayloadParams) -> np.ndarray:
    """Continuous payload dynamics for a wrench ``(F inertial, M body)``.

    ``state`` may be a :class:`PayloadState` or a packed 13-vector; the
    result is always a packed 13-vector derivative.
    """
    x = state.to_vector() if isinstance(state, PayloadState) else np.asarray(state, float)
    w = np.asarray(wrench, dtype=np.float64)[:6]
    return _payload_deriv(x, w, params.mass, params.inertia, params.inertia_inv,
                          params.gravity)


def payload_step(x, wrench, params: PayloadParams, dt: float) -> np.ndarray:
    """One RK4 step followed by quaternion renormalization."""
    xn = geom.rk4_step(lambda s, w: payload_deriv(s, w, params), x, wrench, dt)
    return _normalize_state(xn)


def state_error(state, ref: PayloadReference) -> np.ndarray:
    """12-vector ``[x_des - x, v_des - v, log(q_des^-1 q), w_des - w]``."""
    x = state.to_vector() if isinstance(state, PayloadState) else np.asarray(state, float)
    return _state_error(x, ref.to_vector())


def desired_wrench(ref: PayloadReference, params: PayloadParams,
                   gravity_compensation: bool = True):
    """Feed-forward wrench ``(F_des, M_des)`` for a reference sample."""
    a = np.asarray(ref.acceleration, dtype=np.float64)
    if gravity_compensation:
        a = a + params.gravity
    F = params.mass * a
    J = params.inertia
    M = J @ ref.omega_dot + np.cross(ref.omega, J @ ref.omega)
    return F, M
