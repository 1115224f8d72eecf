"""Coupled payload / cable / quadrotor dynamics.

World state vector: the 13 payload entries ``[x, q, v, Omega]`` followed,
per robot, by ``[xi(3), xi_dot(3), q_k(4), Omega_k(3)]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._jit import kernel
from ..geom import _cross, _hat, _quat_mul, _quat_to_rot
from ..robot import _sphere_accel

PAYLOAD_DIM = 13
ROBOT_DIM = 13


@dataclass(frozen=True)
class SystemParams:
    """Flat arrays of every physical constant, ready for the kernels."""
    m_L: float
    J_L: np.ndarray
    J_L_inv: np.ndarray
    gravity: np.ndarray
    rho: np.ndarray       # (n, 3)
    m: np.ndarray         # (n,)
    l: np.ndarray         # (n,)
    J: np.ndarray         # (n, 3, 3)
    J_inv: np.ndarray     # (n, 3, 3)

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    @property
    def dim(self) -> int:
        return PAYLOAD_DIM + ROBOT_DIM * self.n

    def args(self):
        return (self.m_L, self.J_L, self.J_L_inv, self.gravity, self.rho, self.m, self.l,
                self.J, self.J_inv)

    @classmethod
    def build(cls, payload, robots, rho):
        J = np.array([r.inertia for r in robots], dtype=np.float64)
        return cls(float(payload.mass), payload.inertia, payload.inertia_inv,
                   np.asarray(payload.gravity, dtype=np.float64),
                   np.ascontiguousarray(rho, dtype=np.float64),
                   np.array([r.mass for r in robots], dtype=np.float64),
                   np.array([r.cable_length for r in robots], dtype=np.float64),
                   J, np.linalg.inv(J))


@kernel
def coupled_accel(s, u, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv):
    """Payload and cable accelerations for robot forces ``u`` (n, 3).

    Returns ``(xddot_L, Omegadot_L, xi_ddot (n,3), mu (n,3))`` with ``mu``
    the inertial-frame tension each cable applies to the payload.
    """
    n = rho.shape[0]
    R = _quat_to_rot(s[3:7])
    Om = s[10:13]
    Wh = _hat(Om)
    Wh2 = Wh @ Wh

    K = np.zeros((6, 6))
    rhs = np.zeros(6)
    for i in range(3):
        K[i, i] = m_L
    K[3:6, 3:6] = J_L
    rhs[0:3] = -m_L * g
    rhs[3:6] = -_cross(Om, J_L @ Om)

    cks = np.empty((n, 3))
    RRh = np.empty((n, 3, 3))
    for k in range(n):
        b = PAYLOAD_DIM + ROBOT_DIM * k
        xi = s[b:b + 3]
        xid = s[b + 3:b + 6]
        Pi = np.outer(xi, xi)
        Rr = R @ _hat(rho[k])
        RRh[k] = Rr
        ck = Pi @ (u[k] - m[k] * (g + R @ (Wh2 @ rho[k]))) - m[k] * l[k] * np.sum(xid * xid) * xi
        cks[k] = ck
        # mu_k = ck - m Pi xdd + m Pi Rr Omd
        rhoRt = _hat(rho[k]) @ R.T
        K[0:3, 0:3] += m[k] * Pi
        K[0:3, 3:6] -= m[k] * (Pi @ Rr)
        K[3:6, 0:3] += m[k] * (rhoRt @ Pi)
        K[3:6, 3:6] -= m[k] * (rhoRt @ Pi @ Rr)
        rhs[0:3] += ck
        rhs[3:6] += rhoRt @ ck

    acc = np.linalg.solve(K, rhs)
    xdd = acc[0:3]
    Omd = acc[3:6]
    xi_dd = np.empty((n, 3))
    mu = np.empty((n, 3))
    for k in range(n):
        b = PAYLOAD_DIM + ROBOT_DIM * k
        xi = s[b:b + 3]
        xid = s[b + 3:b + 6]
        Pi = np.outer(xi, xi)
        mu[k] = cks[k] - m[k] * (Pi @ xdd) + m[k] * (Pi @ (RRh[k] @ Omd))
        a_k = xdd + g - RRh[k] @ Omd + R @ (Wh2 @ rho[k])
        xi_dd[k] = _sphere_accel(xi, xid, u[k], m[k], l[k], a_k)
    return xdd, Omd, xi_dd, mu


@kernel
def thrust_forces(s, thrust, n):
    u = np.empty((n, 3))
    for k in range(n):
        b = PAYLOAD_DIM + ROBOT_DIM * k
        R = _quat_to_rot(s[b + 6:b + 10])
        u[k] = thrust[k] * R[:, 2]
    return u


@kernel
def coupled_deriv(s, u, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv):
    """Time derivative of the world state for robot forces and body moments."""
    n = rho.shape[0]
    xdd, Omd, xi_dd, _ = coupled_accel(s, u, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    ds = np.empty(s.shape[0])
    ds[0:3] = s[7:10]
    pure = np.zeros(4)
    pure[1:4] = s[10:13]
    ds[3:7] = 0.5 * _quat_mul(s[3:7], pure)
    ds[7:10] = xdd
    ds[10:13] = Omd
    for k in range(n):
        b = PAYLOAD_DIM + ROBOT_DIM * k
        ds[b:b + 3] = s[b + 3:b + 6]
        ds[b + 3:b + 6] = xi_dd[k]
        pk = np.zeros(4)
        Omk = s[b + 10:b + 13]
        pk[1:4] = Omk
        ds[b + 6:b + 10] = 0.5 * _quat_mul(s[b + 6:b + 10], pk)
        ds[b + 10:b + 13] = J_inv[k] @ (moments[k] - _cross(Omk, J[k] @ Omk))
    return ds


@kernel
def _thrust_deriv(s, thrust, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv):
    u = thrust_forces(s, thrust, rho.shape[0])
    return coupled_deriv(s, u, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)


@kernel
def _normalize_world(s, n):
    """Project onto the constraint manifold; returns the state and the
    largest pre-projection cable-length error (relative)."""
    out = s.copy()
    q = s[3:7]
    q = q / np.sqrt(np.sum(q * q))
    if q[0] < 0.0:
        q = -q
    out[3:7] = q
    worst = 0.0
    for k in range(n):
        b = PAYLOAD_DIM + ROBOT_DIM * k
        xi = s[b:b + 3]
        nx = np.sqrt(np.sum(xi * xi))
        worst = max(worst, abs(nx - 1.0))
        xi = xi / nx
        out[b:b + 3] = xi
        xid = s[b + 3:b + 6]
        out[b + 3:b + 6] = xid - xi * np.sum(xi * xid)
        qk = s[b + 6:b + 10]
        qk = qk / np.sqrt(np.sum(qk * qk))
        if qk[0] < 0.0:
            qk = -qk
        out[b + 6:b + 10] = qk
    return out, worst


@kernel
def rk4_world_raw(s, thrust, moments, dt, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv):
    k1 = _thrust_deriv(s, thrust, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    k2 = _thrust_deriv(s + 0.5 * dt * k1, thrust, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    k3 = _thrust_deriv(s + 0.5 * dt * k2, thrust, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    k4 = _thrust_deriv(s + dt * k3, thrust, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@kernel
def rk4_world(s, thrust, moments, dt, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv):
    raw = rk4_world_raw(s, thrust, moments, dt, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    return _normalize_world(raw, rho.shape[0])


@kernel
def rk4_world_forces(s, u, moments, dt, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv):
    """RK4 step with inertial robot forces held constant (no thrust model)."""
    k1 = coupled_deriv(s, u, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    k2 = coupled_deriv(s + 0.5 * dt * k1, u, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    k3 = coupled_deriv(s + 0.5 * dt * k2, u, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    k4 = coupled_deriv(s + dt * k3, u, moments, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@kernel
def simulate_hold(s, thrust, moments, dt, steps, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv):
    """Integrate ``steps`` physics steps under held actuator commands."""
    worst = 0.0
    for _ in range(steps):
        s, drift = rk4_world(s, thrust, moments, dt, m_L, J_L, J_L_inv, g, rho, m, l, J, J_inv)
        worst = max(worst, drift)
    return s, worst


@kernel
def robot_kinematics(s, rho, l):
    """Attachment and robot positions/velocities, each (n, 3)."""
    n = rho.shape[0]
    R = _quat_to_rot(s[3:7])
    v = s[7:10]
    Om = s[10:13]
    a = np.empty((n, 3))
    ad = np.empty((n, 3))
    x = np.empty((n, 3))
    xd = np.empty((n, 3))
    for k in range(n):
        b = PAYLOAD_DIM + ROBOT_DIM * k
        r = R @ rho[k]
        a[k] = s[0:3] + r
        ad[k] = v + R @ _cross(Om, rho[k])
        x[k] = a[k] - l[k] * s[b:b + 3]
        xd[k] = ad[k] - l[k] * s[b + 3:b + 6]
    return a, ad, x, xd
