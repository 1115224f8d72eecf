"""Quadrotor-on-a-sphere layer: cable kinematics, tension tracking and
geometric attitude control for each robot.

Cable direction ``xi`` is the unit vector from a robot to its attachment
point.  The tension ``mu`` acting on the payload points the other way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._jit import kernel
from .errors import TautViolation, TensionFloorError
from .geom import _cross, _hat, _vee

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class RobotParams:
    mass: float = 0.25
    inertia: np.ndarray = field(default_factory=lambda: np.diag([6.0e-4, 6.0e-4, 1.1e-3]))
    cable_length: float = 1.0
    k_R: np.ndarray = field(default_factory=lambda: np.full(3, 3.0))
    k_Omega: np.ndarray = field(default_factory=lambda: np.full(3, 0.08))
    k_xi: np.ndarray = field(default_factory=lambda: np.full(3, 50.0))
    k_omega: np.ndarray = field(default_factory=lambda: np.full(3, 14.0))

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=np.float64)
        if J.shape == (3,):
            J = np.diag(J)
        object.__setattr__(self, "inertia", J)
        for name in ("k_R", "k_Omega", "k_xi", "k_omega"):
            g = np.asarray(getattr(self, name), dtype=np.float64)
            if g.shape == (3, 3):
                if np.count_nonzero(g - np.diag(np.diag(g))):
                    raise ValueError(f"{name} must be diagonal")
                g = np.diag(g)
            g = np.broadcast_to(g, (3,)).astype(np.float64)
            if np.any(g <= 0.0):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, g)
        if not (self.mass > 0.0 and self.cable_length > 0.0):
            raise ValueError("robot mass and cable length must be positive")
        if np.linalg.eigvalsh(J).min() <= 0.0:
            raise ValueError("robot inertia must be positive definite")


@dataclass
class CableRobotState:
    xi: np.ndarray
    omega: np.ndarray
    R: np.ndarray
    Omega: np.ndarray

    @property
    def xi_dot(self) -> np.ndarray:
        return np.cross(self.omega, self.xi)


# ---------------------------------------------------------------- kernels


@kernel
def _sphere_accel(xi, xidot, u, m, l, a_k):
    xx = _hat(xi)
    return (xx @ xx @ (u - m * a_k)) / (m * l) - np.sum(xidot * xidot) * xi


@kernel
def _control_force(xi, xidot, mu_des, xi_des, omega_des, xidot_des, omegadot_des, a_c,
                   m, l, k_xi, k_omega):
    omega = _cross(xi, xidot)
    e_xi = _cross(xi_des, xi)
    e_om = omega + _cross(xi, _cross(xi, omega_des))
    mu = xi * np.sum(xi * mu_des)
    u_par = mu + m * l * np.sum(omega * omega) * xi + m * xi * np.sum(xi * a_c)
    bracket = (-k_xi * e_xi - k_omega * e_om
               - np.sum(xi * omega_des) * xidot_des
               - _cross(xi, _cross(xi, omegadot_des)))
    u_perp = m * l * _cross(xi, bracket) - m * _cross(xi, _cross(xi, a_c))
    return u_par + u_perp, u_par, u_perp


@kernel
def _desired_attitude(u, yaw):
    b3 = u / np.sqrt(np.sum(u * u))
    b1c = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    b2 = _cross(b3, b1c)
    nb2 = np.sqrt(np.sum(b2 * b2))
    if nb2 < 1e-6:
        # thrust along the heading: complete the frame from the lateral axis
        b2 = np.array([-np.sin(yaw), np.cos(yaw), 0.0])
        b2 = b2 - b3 * np.sum(b2 * b3)
        nb2 = np.sqrt(np.sum(b2 * b2))
    b2 = b2 / nb2
    b1 = _cross(b2, b3)
    R = np.empty((3, 3))
    R[:, 0] = b1
    R[:, 1] = b2
    R[:, 2] = b3
    return R


@kernel
def _attitude_error(R, R_des):
    return 0.5 * _vee(R.T @ R_des - R_des.T @ R)


@kernel
def _thrust_moment(u, R, Om, R_des, Om_des, Omdot_des, J, k_R, k_Om):
    f = np.sum(u * R[:, 2])
    e_R = _attitude_error(R, R_des)
    RtRd = R.T @ R_des
    e_Om = RtRd @ Om_des - Om
    M = (k_R * e_R + k_Om * e_Om + _cross(Om, J @ Om)
         - J @ (_cross(Om, RtRd @ Om_des) - RtRd @ Omdot_des))
    return f, M


# ---------------------------------------------------------------- public API


def cable_state_from_positions(a_k, x_k, a_dot, x_dot, l_k: float, tol: float = 0.01):
    """Cable direction and its rate from attachment and robot kinematics."""
    d = np.asarray(a_k, dtype=np.float64) - np.asarray(x_k, dtype=np.float64)
    dist = np.linalg.norm(d)
    if abs(dist - l_k) > tol * l_k:
        raise TautViolation(
            f"robot-attachment distance {dist:.4f} m differs from cable length {l_k} m")
    xi = d / dist
    xi_dot = (np.asarray(a_dot, dtype=np.float64) - np.asarray(x_dot, dtype=np.float64)) / l_k
    return xi, xi_dot


def project_tension(mu_des, xi) -> np.ndarray:
    """Component of the commanded tension along the actual cable."""
    xi = np.asarray(xi, dtype=np.float64)
    return xi * np.dot(xi, mu_des)


def desired_cable_direction(mu_des, mu_min: float = 0.1) -> np.ndarray:
    mu_des = np.asarray(mu_des, dtype=np.float64)
    nrm = np.linalg.norm(mu_des)
    if nrm < mu_min:
        raise TensionFloorError(f"commanded tension {nrm:.3g} N below floor {mu_min} N")
    return -mu_des / nrm


class CableReferenceFilter:
    """Desired cable direction with filtered derivatives.

    Rates come from a backward difference passed through a first-order
    low-pass filter with cutoff ``cutoff_hz``.  The angular acceleration
    needs a second difference of a piecewise-smooth command, which spikes at
    every NMPC update, so it is reported as zero unless ``accel_feedforward``
    is set.
    """

    def __init__(self, cutoff_hz: float = 20.0, mu_min: float = 0.1,
                 accel_feedforward: bool = False):
        self.tau = 1.0 / (2.0 * np.pi * cutoff_hz)
        self.mu_min = mu_min
        self.accel_feedforward = accel_feedforward
        self.reset()

    def reset(self):
        self._xi = None
        self._omega = None
        self.xi_dot = np.zeros(3)
        self.omega_dot = np.zeros(3)

    def update(self, mu_des, dt: float):
        """Returns ``(xi_des, omega_des, xidot_des, omegadot_des)``."""
        xi = desired_cable_direction(mu_des, self.mu_min)
        a = dt / (dt + self.tau)
        if self._xi is not None:
            self.xi_dot = (1.0 - a) * self.xi_dot + a * (xi - self._xi) / dt
        omega = np.cross(xi, self.xi_dot)
        if self._omega is not None and self.accel_feedforward:
            self.omega_dot = (1.0 - a) * self.omega_dot + a * (omega - self._omega) / dt
        self._xi = xi
        self._omega = omega
        return xi, omega, self.xi_dot.copy(), self.omega_dot.copy()


def desired_cable_state(mu_des, mu_min: float = 0.1, filt: CableReferenceFilter | None = None,
                        dt: float | None = None):
    """``(xi_des, omega_des)``; rates need a filter and sample time."""
    if filt is None:
        return desired_cable_direction(mu_des, mu_min), np.zeros(3)
    xi, omega, _, _ = filt.update(mu_des, dt)
    return xi, omega


def attach_accel_command(acc_des, gravity, R_L, rho_k, Omega_L, Omegadot_L) -> np.ndarray:
    """``a_c = acc_des + g - R rho^ Omegadot + R Omega^2 rho``."""
    W = _hat(np.asarray(Omega_L, dtype=np.float64))
    return (np.asarray(acc_des) + gravity - R_L @ np.cross(rho_k, Omegadot_L)
            + R_L @ (W @ W @ rho_k))


def control_force(xi, xi_dot, mu_des, xi_des, omega_des, xidot_des, omegadot_des, a_c,
                  params: RobotParams):
    """Force command ``u = u_par + u_perp``; returns ``(u, u_par, u_perp)``."""
    f = lambda v: np.ascontiguousarray(v, dtype=np.float64)
    return _control_force(f(xi), f(xi_dot), f(mu_des), f(xi_des), f(omega_des), f(xidot_des),
                          f(omegadot_des), f(a_c), params.mass, params.cable_length,
                          params.k_xi, params.k_omega)


def desired_attitude(u, yaw: float = 0.0) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if np.linalg.norm(u) < 1e-6:
        raise ValueError("force command too small to define a thrust direction")
    return _desired_attitude(u, float(yaw))


def attitude_error(R, R_des) -> np.ndarray:
    return _attitude_error(np.asarray(R, dtype=np.float64), np.asarray(R_des, dtype=np.float64))


def attitude_thrust_moment(u, R, Omega, R_des, Omega_des, Omegadot_des, params: RobotParams):
    """Scalar thrust along the body z-axis and body moment."""
    u = np.asarray(u, dtype=np.float64)
    if np.linalg.norm(u) < 1e-6:
        raise ValueError("force command too small to define a thrust direction")
    f = lambda v: np.ascontiguousarray(v, dtype=np.float64)
    return _thrust_moment(u, f(R), f(Omega), f(R_des), f(Omega_des), f(Omegadot_des),
                          params.inertia, params.k_R, params.k_Omega)


def robot_sphere_deriv(xi, xi_dot, u, a_k, params: RobotParams) -> np.ndarray:
    """Cable acceleration of a taut cable under robot force ``u``."""
    f = lambda v: np.ascontiguousarray(v, dtype=np.float64)
    return _sphere_accel(f(xi), f(xi_dot), f(u), params.mass, params.cable_length, f(a_k))
