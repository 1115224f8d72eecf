"""Closed-loop simulation: NMPC on the payload, tension-tracking controllers
on the robots, and the coupled rigid-body physics underneath.

Three rates are nested.  Physics integrates at ``physics_dt_s``; the robot
controllers run every few physics steps with zero-order hold; the NMPC runs
at ``nmpc_rate_hz`` and its first-stage command is held until the next solve.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..allocation import AllocationModel
from ..errors import CableNmpcError, PhysicsError, TautViolation
from ..geom import quat_exp, quat_mul, quat_to_rot, rot_to_quat
from ..nmpc import OcpSolution, PayloadNmpc, warm_start_shift
from ..payload import STATE_DIM, PayloadParams, PayloadState
from ..robot import (CableReferenceFilter, CableRobotState,
                     attach_accel_command, attitude_thrust_moment,
                     cable_state_from_positions, control_force, desired_attitude)
from .dynamics import (PAYLOAD_DIM, ROBOT_DIM, SystemParams, coupled_accel, coupled_deriv,
                       robot_kinematics, simulate_hold, thrust_forces)

log = logging.getLogger(__name__)

TAUT_TOL = 1e-3


# ---------------------------------------------------------------- world state


@dataclass
class WorldState:
    """Flat world vector plus simulation time."""
    vector: np.ndarray
    time: float = 0.0

    @property
    def n(self) -> int:
        return (self.vector.shape[0] - PAYLOAD_DIM) // ROBOT_DIM

    @property
    def payload(self) -> PayloadState:
        return PayloadState.from_vector(self.vector[:STATE_DIM])

    @property
    def robots(self) -> list:
        out = []
        for k in range(self.n):
            b = PAYLOAD_DIM + ROBOT_DIM * k
            xi = self.vector[b:b + 3].copy()
            xid = self.vector[b + 3:b + 6]
            out.append(CableRobotState(xi, np.cross(xi, xid), quat_to_rot(self.vector[b + 6:b + 10]),
                                       self.vector[b + 10:b + 13].copy()))
        return out

    @classmethod
    def from_parts(cls, payload: PayloadState, robots, t: float = 0.0) -> "WorldState":
        parts = [payload.to_vector()]
        for r in robots:
            parts.append(np.concatenate((r.xi, r.xi_dot, rot_to_quat(r.R), r.Omega)))
        return cls(np.concatenate(parts), t)

    def robot_positions(self, sys: SystemParams) -> np.ndarray:
        return robot_kinematics(self.vector, sys.rho, sys.l)[2]

    def taut_error(self, sys: SystemParams) -> float:
        a, _, x, _ = robot_kinematics(self.vector, sys.rho, sys.l)
        return float(np.max(np.abs(np.linalg.norm(a - x, axis=1) - sys.l)))


@dataclass
class TeamCommand:
    """Held actuator command: collective thrust (n,) and body moments (n, 3)."""
    thrust: np.ndarray
    moments: np.ndarray


def world_derivative(world: WorldState, u, sys: SystemParams, moments=None) -> np.ndarray:
    """Time derivative of the world vector for inertial robot forces ``u`` (n, 3)."""
    u = np.ascontiguousarray(u, dtype=np.float64).reshape(sys.n, 3)
    mom = np.zeros((sys.n, 3)) if moments is None else np.ascontiguousarray(moments, dtype=np.float64)
    return coupled_deriv(world.vector, u, mom, *sys.args())


def cable_tensions(world: WorldState, u, sys: SystemParams) -> np.ndarray:
    """Inertial tensions (n, 3) each cable applies to the payload."""
    u = np.ascontiguousarray(u, dtype=np.float64).reshape(sys.n, 3)
    return coupled_accel(world.vector, u, *sys.args())[3]


def step(world: WorldState, command: TeamCommand, dt: float, sys: SystemParams,
         substeps: int = 1) -> WorldState:
    """Advance ``substeps`` RK4 steps of size ``dt`` under a held command."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    s, drift = simulate_hold(world.vector, np.ascontiguousarray(command.thrust, dtype=np.float64),
                             np.ascontiguousarray(command.moments, dtype=np.float64),
                             dt, substeps, *sys.args())
    if drift > TAUT_TOL or not np.all(np.isfinite(s)):
        raise TautViolation(f"cable length drift {drift:.3g} exceeds {TAUT_TOL}", world.vector.copy())
    return WorldState(s, world.time + dt * substeps)


def equilibrium_world(position, payload: PayloadParams, robots, model: AllocationModel,
                      yaw: float = 0.0, velocity=None, acceleration=None):
    """Payload at ``position`` held by min-norm tensions, everything translating
    together with ``velocity`` and ``acceleration`` (default: at rest).

    Returns ``(world, command)`` with the command that realizes that motion.
    """
    v = np.zeros(3) if velocity is None else np.asarray(velocity, dtype=np.float64)
    acc = np.zeros(3) if acceleration is None else np.asarray(acceleration, dtype=np.float64)
    w = np.concatenate((payload.mass * (acc + payload.gravity), np.zeros(3)))
    mu = (model.P_pinv @ w).reshape(model.n, 3)
    pl = PayloadState(np.asarray(position, dtype=np.float64), np.array([1.0, 0.0, 0.0, 0.0]),
                      v.copy(), np.zeros(3))
    states, thrust, moments = [], np.empty(model.n), np.zeros((model.n, 3))
    for k, rp in enumerate(robots):
        xi = -mu[k] / np.linalg.norm(mu[k])
        u = mu[k] + rp.mass * (acc + payload.gravity)
        R = desired_attitude(u, yaw)
        states.append(CableRobotState(xi, np.zeros(3), R, np.zeros(3)))
        thrust[k] = np.linalg.norm(u)
    return WorldState.from_parts(pl, states), TeamCommand(thrust, moments)


# ---------------------------------------------------------------- controllers


class TeamController:
    """Per-robot cable and attitude controllers sharing one NMPC command."""

    def __init__(self, robots, model: AllocationModel, payload: PayloadParams,
                 sys: SystemParams, cutoff_hz: float = 20.0, yaw: float = 0.0):
        self.robots = list(robots)
        self.model = model
        self.payload = payload
        self.sys = sys
        self.yaw = yaw
        self.filters = [CableReferenceFilter(cutoff_hz, model.mu_min) for _ in self.robots]
        self.last_u = np.zeros((len(self.robots), 3))

    def tension_command(self, solution: OcpSolution, R_L) -> np.ndarray:
        """Inertial tension targets (n, 3) from the first NMPC stage."""
        return solution.tensions[0] @ R_L.T

    def update(self, s, mu_des, acc_des, omd_des, dt, measured=None) -> TeamCommand:
        """One controller tick.

        ``measured`` optionally replaces the true ``(a, a_dot, x, x_dot)``
        kinematics used for cable-state estimation.
        """
        sys = self.sys
        kin = measured if measured is not None else robot_kinematics(s, sys.rho, sys.l)
        a, ad, x, xd = kin
        R_L = quat_to_rot(s[3:7])
        Om_L = s[10:13]
        n = len(self.robots)
        thrust = np.empty(n)
        moments = np.empty((n, 3))
        zero = np.zeros(3)
        for k, rp in enumerate(self.robots):
            xi, xi_dot = cable_state_from_positions(a[k], x[k], ad[k], xd[k], rp.cable_length)
            xi_d, om_d, xid_d, omd_d = self.filters[k].update(mu_des[k], dt)
            a_c = attach_accel_command(acc_des, self.payload.gravity, R_L, sys.rho[k], Om_L, omd_des)
            u, _, _ = control_force(xi, xi_dot, mu_des[k], xi_d, om_d, xid_d, omd_d, a_c, rp)
            b = PAYLOAD_DIM + ROBOT_DIM * k
            R = quat_to_rot(s[b + 6:b + 10])
            R_des = desired_attitude(u, self.yaw)
            thrust[k], moments[k] = attitude_thrust_moment(u, R, s[b + 10:b + 13], R_des, zero, zero, rp)
            self.last_u[k] = u
        return TeamCommand(thrust, moments)


# ---------------------------------------------------------------- logging


def log_columns(n: int) -> list:
    cols = ["t"]
    cols += [f"{p}_{a}" for p in ("x", "xref") for a in "xyz"]
    cols += ["qw", "qx", "qy", "qz"] + [f"v_{a}" for a in "xyz"] + [f"omega_{a}" for a in "xyz"]
    for k in range(n):
        cols += [f"mu{k}_{a}" for a in "xyz"] + [f"mucmd{k}_norm", f"mu{k}_norm"]
    for k in range(n):
        cols += [f"xi{k}_{a}" for a in "xyz"]
    for k in range(n):
        cols += [f"robot{k}_{a}" for a in "xyz"]
    cols += [f"dist{i}{j}" for i in range(n) for j in range(i + 1, n)]
    cols += ["nmpc_iterations", "nmpc_kkt", "nmpc_violation"]
    return cols


@dataclass
class SimLog:
    """Sampled simulation record; ``data`` rows follow ``columns``."""
    columns: list
    data: np.ndarray
    n: int
    sample_period: float
    tracking_start: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        return np.column_stack([self.column(f"{prefix}_{a}") for a in "xyz"])

    @property
    def time(self) -> np.ndarray:
        return self.column("t")

    def distances(self) -> np.ndarray:
        idx = [i for i, c in enumerate(self.columns) if c.startswith("dist")]
        return self.data[:, idx]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.data:
                fh.write(",".join(format(v, ".10g") for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, sample_period: float | None = None,
                 tracking_start: float = 0.0) -> "SimLog":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n = sum(1 for c in header if c.startswith("mucmd"))
        if sample_period is None:
            sample_period = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 0.0
        return cls(header, data, n, sample_period, tracking_start)


class _Recorder:
    def __init__(self, n: int, capacity: int):
        self.cols = log_columns(n)
        self.buf = np.empty((capacity, len(self.cols)))
        self.rows = 0
        self.n = n

    def add(self, t, s, ref_pos, mu_actual, mu_cmd_load, robot_pos, diag):
        n = self.n
        row = [t, *s[0:3], *ref_pos, *s[3:13]]
        for k in range(n):
            row += [*mu_actual[k], np.linalg.norm(mu_cmd_load[k]), np.linalg.norm(mu_actual[k])]
        for k in range(n):
            b = PAYLOAD_DIM + ROBOT_DIM * k
            row += list(s[b:b + 3])
        for k in range(n):
            row += list(robot_pos[k])
        row += [np.linalg.norm(robot_pos[i] - robot_pos[j])
                for i in range(n) for j in range(i + 1, n)]
        row += [diag.get("iterations", 0), diag.get("kkt", np.nan), diag.get("max_violation", np.nan)]
        if self.rows == self.buf.shape[0]:
            self.buf = np.concatenate((self.buf, np.empty_like(self.buf)))
        self.buf[self.rows] = row
        self.rows += 1

    def finish(self, period, tracking_start, meta) -> SimLog:
        return SimLog(self.cols, self.buf[:self.rows].copy(), self.n, period, tracking_start, meta)


# ---------------------------------------------------------------- scenario runner


class SimulationFault(CableNmpcError):
    """Wraps a solver or physics fault together with the partial log."""

    def __init__(self, cause: Exception, partial_log: SimLog, summary: dict):
        super().__init__(str(cause))
        self.cause = cause
        self.partial_log = partial_log
        self.summary = summary


def _ratio(rate_hz: float, dt: float) -> int:
    return max(1, int(round(1.0 / (rate_hz * dt))))


def _noisy_kinematics(rng, s, sys, pos_sigma, att_sigma):
    """Kinematics seen through noisy payload pose and robot position sensors."""
    s = s.copy()
    if att_sigma > 0.0:
        s[3:7] = quat_mul(s[3:7], quat_exp(rng.normal(0.0, att_sigma, 3)))
    if pos_sigma > 0.0:
        s[0:3] += rng.normal(0.0, pos_sigma, 3)
    a, ad, x, xd = robot_kinematics(s, sys.rho, sys.l)
    if pos_sigma > 0.0:
        x = x + rng.normal(0.0, pos_sigma, x.shape)
    return s, (a, ad, x, xd)


def run_scenario(scenario, duration: float | None = None) -> tuple:
    """Simulate a :class:`~cablenmpc.scenario.Scenario`.

    Returns ``(SimLog, summary dict)``.  A solver or physics fault raises
    :class:`SimulationFault` carrying the log up to the fault.
    """
    from ..report import summarize

    wall0 = time.perf_counter()
    payload = scenario.payload_params()
    robots = scenario.robot_params()
    model = scenario.allocation()
    cfg = scenario.ocp_config()
    traj = scenario.trajectory()
    simcfg = scenario.data["sim"]
    T = scenario.duration() if duration is None else float(duration)

    dt = simcfg["physics_dt_s"]
    ctrl_every = _ratio(simcfg["controller_rate_hz"], dt)
    nmpc_every = _ratio(simcfg["nmpc_rate_hz"], dt) // ctrl_every
    log_every = _ratio(simcfg["log_rate_hz"], dt) // ctrl_every
    dt_ctrl = dt * ctrl_every
    yaw = np.deg2rad(simcfg["yaw_deg"])
    pos_sigma = simcfg["position_noise_m"]
    att_sigma = simcfg["attitude_noise_rad"]
    rng = np.random.default_rng(scenario.data["seed"])
    foh = simcfg["command_hold"] == "foh"

    sys = SystemParams.build(payload, robots, model.rho)
    r0 = traj.sample(0.0)
    world, command = equilibrium_world(r0.position, payload, robots, model, yaw,
                                       r0.velocity, r0.acceleration)
    team = TeamController(robots, model, payload, sys, simcfg["cable_filter_cutoff_hz"], yaw)
    nmpc = PayloadNmpc(payload, model, cfg)

    n_ticks = int(round(T / dt_ctrl))
    rec = _Recorder(model.n, n_ticks // log_every + 2)
    solve_times, iters, kkts, max_cmd = [], [], [], 0.0
    sol = None
    t_solve = 0.0
    diag = {}
    mu_cmd_load = np.zeros((model.n, 3))
    meta = {"scenario": scenario.name, "n": model.n, "null_dim": model.null_dim,
            "physics_dt_s": dt, "controller_dt_s": dt_ctrl, "nmpc_dt_s": dt_ctrl * nmpc_every,
            "tracking_start_s": traj.tracking_start, "tracking_end_s": T,
            "command_hold": simcfg["command_hold"]}

    def finish():
        return rec.finish(dt_ctrl * log_every, traj.tracking_start, meta)

    stats = lambda: {"solve_times": solve_times, "iterations": iters, "kkt": kkts,
                     "max_commanded_tension": max_cmd, "wall_time": time.perf_counter() - wall0}

    try:
        for tick in range(n_ticks + 1):
            t = tick * dt_ctrl
            s = world.vector
            if pos_sigma > 0.0 or att_sigma > 0.0:
                s_meas, kin = _noisy_kinematics(rng, s, sys, pos_sigma, att_sigma)
            else:
                s_meas, kin = s, None

            if tick % nmpc_every == 0:
                refs = [traj.sample(t + i * cfg.dt) for i in range(cfg.horizon + 1)]
                x0 = s_meas[:STATE_DIM].copy()
                if sol is None:
                    sol = nmpc.solve(x0, refs, mode="converge")
                else:
                    sol = nmpc.solve(x0, refs, warm=warm_start_shift(sol))
                diag = sol.diagnostics
                solve_times.append(diag["solve_time"])
                iters.append(diag["iterations"])
                kkts.append(diag["kkt"])
                max_cmd = max(max_cmd, float(np.max(np.linalg.norm(sol.tensions[:2], axis=2))))
                t_solve = t

            # first-order hold interpolates along the plan's first interval
            tau = min((t - t_solve) / cfg.dt, 1.0) if foh else 0.0
            mu_cmd_load = (1.0 - tau) * sol.tensions[0] + tau * sol.tensions[1]
            W0 = (1.0 - tau) * sol.inputs[0, :6] + tau * sol.inputs[1, :6]

            R_L = quat_to_rot(s_meas[3:7])
            Om = s_meas[10:13]
            acc_des = W0[:3] / payload.mass - payload.gravity
            omd_des = payload.inertia_inv @ (W0[3:6] - np.cross(Om, payload.inertia @ Om))
            mu_des = mu_cmd_load @ R_L.T
            command = team.update(s_meas, mu_des, acc_des, omd_des, dt_ctrl, kin)

            if tick % log_every == 0:
                u = thrust_forces(s, command.thrust, model.n)
                mu_act = coupled_accel(s, u, *sys.args())[3]
                rp = robot_kinematics(s, sys.rho, sys.l)[2]
                rec.add(t, s, traj.sample(t).position, mu_act, mu_cmd_load, rp, diag)

            if tick == n_ticks:
                break
            world = step(world, command, dt, sys, ctrl_every)
            if not np.all(np.isfinite(world.vector)):
                raise PhysicsError("non-finite world state", world.vector.copy())
    except CableNmpcError as exc:
        meta["fault"] = f"{type(exc).__name__}: {exc}"
        meta["fault_time_s"] = t
        partial = finish()
        raise SimulationFault(exc, partial, summarize(partial, stats())) from exc

    simlog = finish()
    return simlog, summarize(simlog, stats())
