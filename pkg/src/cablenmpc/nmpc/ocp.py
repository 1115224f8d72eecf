"""Receding-horizon payload controller.

Decision variables are payload states and inputs ``U = [F, M, lam]`` over
``N`` stages, linked by RK4 multiple shooting.  Each SQP iteration solves
a Gauss-Newton QP in tangent coordinates; inequality constraints are
softened with L1-penalized slacks so every QP is feasible.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..allocation import AllocationModel
from ..errors import SolverError
from ..geom import quat_to_rot
from ..payload import PayloadParams, PayloadState
from . import kernels
from .qp import SparseQp

NX = 12
RTI_QP_TOL = 1e-6
CONVERGE_QP_TOL = 1e-9


def default_state_weight() -> np.ndarray:
    return np.diag(np.repeat([200.0, 20.0, 100.0, 10.0], 3))


@dataclass
class OcpConfig:
    horizon: int = 20
    dt: float = 0.05
    Q_X: np.ndarray = field(default_factory=default_state_weight)
    Q_XN: Optional[np.ndarray] = None
    Q_U: Optional[np.ndarray] = None
    wrench_weight: float = 1.0
    lambda_weight: float = 10.0
    d_r: float = 0.6
    obstacles: Sequence = ()
    f_max: float = 4.0
    mu_min: float = 0.1
    mode: str = "rti"
    max_sqp_iter: int = 50
    kkt_tol: float = 1e-6
    slack_weight: float = 1e4
    gravity_compensation: bool = True

    def __post_init__(self):
        self.Q_X = np.asarray(self.Q_X, dtype=np.float64)
        if self.Q_X.ndim == 1:
            self.Q_X = np.diag(self.Q_X)
        if self.Q_XN is None:
            self.Q_XN = 5.0 * self.Q_X
        self.Q_XN = np.asarray(self.Q_XN, dtype=np.float64)
        if self.Q_XN.ndim == 1:
            self.Q_XN = np.diag(self.Q_XN)
        if self.Q_U is not None:
            self.Q_U = np.asarray(self.Q_U, dtype=np.float64)
            if self.Q_U.ndim == 1:
                self.Q_U = np.diag(self.Q_U)
        problems = []
        if self.horizon < 2:
            problems.append("horizon must be >= 2 steps")
        if not self.dt > 0.0:
            problems.append("dt must be positive")
        for name in ("Q_X", "Q_XN"):
            if getattr(self, name).shape != (NX, NX):
                problems.append(f"{name} must be 12x12")
            elif not _is_psd(getattr(self, name)):
                problems.append(f"{name} must be symmetric positive semidefinite")
        if self.Q_U is not None and not _is_psd(self.Q_U):
            problems.append("Q_U must be symmetric positive semidefinite")
        if not self.d_r > 0.0:
            problems.append("d_r must be positive")
        if not self.f_max > self.mu_min > 0.0:
            problems.append("need f_max > mu_min > 0")
        if self.mode not in ("rti", "converge"):
            problems.append(f"unknown solver mode {self.mode!r}")
        if problems:
            from ..errors import ConfigError
            raise ConfigError(problems)

    def input_weight(self, n: int) -> np.ndarray:
        nu = 3 * n
        if self.Q_U is not None:
            if self.Q_U.shape != (nu, nu):
                raise ValueError(f"Q_U must be {nu}x{nu} for {n} robots")
            return self.Q_U
        return np.diag(np.concatenate((np.full(6, self.wrench_weight),
                                       np.full(nu - 6, self.lambda_weight))))

    def obstacle_array(self) -> np.ndarray:
        rows = []
        for ob in self.obstacles:
            if isinstance(ob, dict):
                p = ob["position_m"]
                rows.append([*p, ob["robot_clearance_m"], ob["payload_clearance_m"]])
            else:
                p, d_or, d_ol = ob
                rows.append([*p, d_or, d_ol])
        return np.asarray(rows, dtype=np.float64).reshape(-1, 5)


def _is_psd(M) -> bool:
    return np.allclose(M, M.T, atol=1e-12) and np.linalg.eigvalsh(M).min() >= -1e-12


@dataclass
class OcpSolution:
    states: np.ndarray       # (N+1, 13)
    inputs: np.ndarray       # (N, 3n)
    tensions: np.ndarray     # (N, n, 3), load frame
    diagnostics: dict = field(default_factory=dict)

    @property
    def first_wrench(self) -> np.ndarray:
        return self.inputs[0, :6].copy()

    @property
    def first_lambda(self) -> np.ndarray:
        return self.inputs[0, 6:].copy()

    def log_record(self) -> dict:
        d = self.diagnostics
        return {
            "iterations": d.get("iterations", 0),
            "kkt": d.get("kkt", float("nan")),
            "max_violation": d.get("max_violation", float("nan")),
            "solve_time_s": d.get("solve_time", float("nan")),
            "qp_status": d.get("qp_status", ""),
        }


def pack_refs(refs) -> np.ndarray:
    if isinstance(refs, np.ndarray):
        return np.ascontiguousarray(refs, dtype=np.float64)
    return np.array([r.to_vector() for r in refs], dtype=np.float64)


def _state_vec(x) -> np.ndarray:
    if isinstance(x, PayloadState):
        return x.to_vector()
    return np.ascontiguousarray(x, dtype=np.float64)


def desired_inputs(refs, params: PayloadParams, gravity_compensation=True) -> np.ndarray:
    """Feed-forward wrench per stage from packed references, shape (N, 6)."""
    refs = pack_refs(refs)
    acc = refs[:, 13:16] + (params.gravity if gravity_compensation else 0.0)
    w, wd = refs[:, 10:13], refs[:, 16:19]
    J = params.inertia
    out = np.empty((refs.shape[0], 6))
    out[:, :3] = params.mass * acc
    out[:, 3:] = wd @ J.T + np.cross(w, w @ J.T)
    return out


def evaluate_cost(states, inputs, refs, cfg: OcpConfig, params: PayloadParams) -> float:
    """Tracking cost of a trajectory; the last stage uses the terminal weight."""
    states = np.ascontiguousarray(states, dtype=np.float64)
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    refs = pack_refs(refs)
    n = inputs.shape[1] // 3
    udes = desired_inputs(refs[:-1], params, cfg.gravity_compensation)
    return float(kernels.horizon_cost(states, inputs, refs, udes, cfg.Q_X, cfg.Q_XN,
                                      cfg.input_weight(n)))


def evaluate_constraints(state, u, model: AllocationModel, cfg: OcpConfig) -> np.ndarray:
    """Stage constraint residuals; non-negative entries are satisfied."""
    c, _, _ = constraint_jacobians(state, u, model, cfg)
    return c


def constraint_jacobians(state, u, model: AllocationModel, cfg: OcpConfig):
    x = _state_vec(state)
    u = np.ascontiguousarray(u, dtype=np.float64)
    return kernels.stage_constraints(x, u, model.P_pinv, model.N, model.rho, model.cable_len,
                                     cfg.obstacle_array(), cfg.d_r, cfg.f_max, cfg.mu_min)


def stage_tensions(states, inputs, model: AllocationModel) -> np.ndarray:
    out = np.empty((inputs.shape[0], model.n, 3))
    for i, u in enumerate(inputs):
        R = quat_to_rot(states[i, 3:7])
        wl = np.concatenate((R.T @ u[:3], u[3:6]))
        out[i] = (model.P_pinv @ wl + model.N @ u[6:]).reshape(model.n, 3)
    return out


def warm_start_shift(prev: OcpSolution, refs=None) -> OcpSolution:
    """Shift a solution one stage forward, duplicating the last stage."""
    states = np.concatenate((prev.states[1:], prev.states[-1:]), axis=0)
    inputs = np.concatenate((prev.inputs[1:], prev.inputs[-1:]), axis=0)
    tensions = np.concatenate((prev.tensions[1:], prev.tensions[-1:]), axis=0)
    return OcpSolution(states, inputs, tensions, {"shifted_from": prev.diagnostics.get("iterations", 0)})


class PayloadNmpc:
    """SQP solver for the payload OCP.  One instance per caller thread."""

    def __init__(self, params: PayloadParams, model: AllocationModel, cfg: OcpConfig):
        self.params = params
        self.model = model
        self.cfg = cfg
        self.n = model.n
        self.nu = 3 * model.n
        self.Qu = cfg.input_weight(model.n)
        self.obstacles = cfg.obstacle_array()
        self.nc = int(kernels.num_constraints(self.n, self.obstacles.shape[0]))
        self._build_pattern()

    # ------------------------------------------------------------ layout

    def _ix(self, i):
        return NX * i

    def _iu(self, i):
        return NX * (self.cfg.horizon + 1) + self.nu * i

    def _is(self, i):
        return NX * (self.cfg.horizon + 1) + self.nu * self.cfg.horizon + self.nc * i

    def _build_pattern(self):
        N, nu, nc = self.cfg.horizon, self.nu, self.nc
        n_var = NX * (N + 1) + nu * N + nc * N

        # Hessian: upper triangles of the block diagonal
        hr, hc = [], []
        tx = np.triu_indices(NX)
        tu = np.triu_indices(nu)
        for i in range(N + 1):
            hr.append(tx[0] + self._ix(i))
            hc.append(tx[1] + self._ix(i))
        for i in range(N):
            hr.append(tu[0] + self._iu(i))
            hc.append(tu[1] + self._iu(i))
        self._tx, self._tu = tx, tu

        n_eq = NX * (N + 1)
        n_ineq = 2 * nc * N
        ar, ac = [], []
        eye = np.arange(NX)
        ar.append(eye)
        ac.append(eye + self._ix(0))
        gi, gj = np.meshgrid(np.arange(NX), np.arange(NX), indexing="ij")
        bi, bj = np.meshgrid(np.arange(NX), np.arange(6), indexing="ij")
        for i in range(N):
            row0 = NX * (i + 1)
            ar.append((gi + row0).ravel())
            ac.append((gj + self._ix(i)).ravel())
        for i in range(N):
            row0 = NX * (i + 1)
            ar.append((bi + row0).ravel())
            ac.append((bj + self._iu(i)).ravel())
        for i in range(N):
            ar.append(eye + NX * (i + 1))
            ac.append(eye + self._ix(i + 1))
        ci, cj = np.meshgrid(np.arange(nc), np.arange(NX), indexing="ij")
        ui, uj = np.meshgrid(np.arange(nc), np.arange(nu), indexing="ij")
        for i in range(N):
            ar.append((ci + n_eq + nc * i).ravel())
            ac.append((cj + self._ix(i)).ravel())
        for i in range(N):
            ar.append((ui + n_eq + nc * i).ravel())
            ac.append((uj + self._iu(i)).ravel())
        sl = np.arange(nc * N)
        ar.append(sl + n_eq)
        ac.append(sl + self._is(0))
        ar.append(sl + n_eq + nc * N)
        ac.append(sl + self._is(0))

        self.n_var, self.n_eq, self.n_ineq = n_var, n_eq, n_ineq
        self.qp = SparseQp(n_var, np.concatenate(hr), np.concatenate(hc),
                           np.concatenate(ar), np.concatenate(ac), n_eq, n_ineq)

    # ------------------------------------------------------------ helpers

    def _kernel_args(self):
        p = self.params
        return (p.mass, p.inertia, p.inertia_inv, p.gravity)

    def _constraint_args(self):
        m, c = self.model, self.cfg
        return (m.P_pinv, m.N, m.rho, m.cable_len, self.obstacles, c.d_r, c.f_max, c.mu_min)

    def initial_guess(self, x0, refs) -> OcpSolution:
        """Feed-forward inputs with zero null-space coordinates, rolled out from x0."""
        refs = pack_refs(refs)
        udes = desired_inputs(refs[:-1], self.params, self.cfg.gravity_compensation)
        us = np.zeros((self.cfg.horizon, self.nu))
        us[:, :6] = udes
        xs = kernels.rollout(x0, us, self.cfg.dt, *self._kernel_args())
        return OcpSolution(xs, us, stage_tensions(xs, us, self.model), {})

    def linearize(self, x0, xs, us, refs, udes):
        return kernels.linearize_horizon(xs, us, refs, udes, x0, self.cfg.dt,
                                         *self._kernel_args(), self.cfg.Q_X, self.cfg.Q_XN,
                                         self.Qu, *self._constraint_args())

    def merit(self, x0, xs, us, refs, udes, nu_eq):
        cost = kernels.horizon_cost(xs, us, refs, udes, self.cfg.Q_X, self.cfg.Q_XN, self.Qu)
        defect, viol = kernels.merit_terms(xs, us, x0, self.cfg.dt, *self._kernel_args(),
                                           *self._constraint_args())
        return cost + self.cfg.slack_weight * viol + nu_eq * defect, defect, viol

    def _qp_data(self, lin):
        d0, defects, A, B, Hx, gx, Hu, gu, c, Cx, Cu, cost = lin
        N, nc = self.cfg.horizon, self.nc
        tx, tu = self._tx, self._tu
        Hx = 0.5 * (Hx + Hx.transpose(0, 2, 1))
        h_vals = np.concatenate((Hx[:, tx[0], tx[1]].ravel(), Hu[:, tu[0], tu[1]].ravel()))
        g = np.concatenate((gx.ravel(), gu.ravel(), np.full(nc * N, self.cfg.slack_weight)))
        a_vals = np.concatenate((
            np.ones(NX),
            (-A).ravel(),
            (-B[:, :, :6]).ravel(),
            np.ones(NX * N),
            (-Cx).ravel(),
            (-Cu).ravel(),
            -np.ones(nc * N),
            -np.ones(nc * N),
        ))
        b = np.concatenate((d0, defects.ravel(), c.ravel(), np.zeros(nc * N)))
        return h_vals, g, a_vals, b

    # ------------------------------------------------------------ solve

    def solve(self, x0, refs, warm: Optional[OcpSolution] = None,
              mode: Optional[str] = None) -> OcpSolution:
        t_start = time.perf_counter()
        cfg = self.cfg
        mode = mode or cfg.mode
        x0 = _state_vec(x0)
        refs = pack_refs(refs)
        if refs.shape[0] != cfg.horizon + 1:
            raise ValueError(f"need {cfg.horizon + 1} reference samples, got {refs.shape[0]}")
        if not np.all(np.isfinite(x0)):
            raise SolverError("non-finite initial state")
        if warm is None:
            warm = self.initial_guess(x0, refs)
        xs = np.ascontiguousarray(warm.states, dtype=np.float64).copy()
        us = np.ascontiguousarray(warm.inputs, dtype=np.float64).copy()
        udes = desired_inputs(refs[:-1], self.params, cfg.gravity_compensation)

        max_iter = 1 if mode == "rti" else cfg.max_sqp_iter
        nu_eq = 1.0
        merits, kkt, status, qp_iters, qp_time = [], np.inf, "", 0, 0.0
        it = 0
        for it in range(1, max_iter + 1):
            lin = self.linearize(x0, xs, us, refs, udes)
            cost0 = lin[-1]
            if not np.isfinite(cost0) or not all(np.all(np.isfinite(a)) for a in lin[:-1]):
                raise SolverError("non-finite model evaluation",
                                  {"iteration": it, "cost": float(cost0)})
            h_vals, g, a_vals, b = self._qp_data(lin)
            res = self.qp.solve(h_vals, g, a_vals, b,
                                tol=RTI_QP_TOL if mode == "rti" else CONVERGE_QP_TOL)
            status = res.status
            qp_iters += res.iterations
            qp_time += res.solve_time
            if status not in ("Solved", "AlmostSolved") or not np.all(np.isfinite(res.x)):
                raise SolverError(f"QP subproblem failed with status {status}",
                                  {"iteration": it, "qp_status": status})
            step = res.x
            N = cfg.horizon
            dx = step[:NX * (N + 1)].reshape(N + 1, NX)
            du = step[NX * (N + 1):self._is(0)].reshape(N, self.nu)

            H = self.qp.hessian(h_vals)
            nxu = self._is(0)
            stat = np.max(np.abs(H[:nxu, :nxu] @ step[:nxu]))
            primal = max(np.max(np.abs(lin[0])), np.max(np.abs(lin[1])))
            kkt = max(stat, primal, np.max(np.abs(step[:nxu])))

            if mode == "rti":
                xs, us = kernels.retract_horizon(xs, us, dx, du, 1.0)
                break

            nu_eq = max(nu_eq, 2.0 * float(np.max(np.abs(res.y[:self.n_eq]))))
            m0, _, _ = self.merit(x0, xs, us, refs, udes, nu_eq)
            if not merits:
                merits.append(m0)
            if kkt < cfg.kkt_tol:
                xs, us = kernels.retract_horizon(xs, us, dx, du, 1.0)
                break
            model_val = cost0 + res.objective
            pred = max(m0 - model_val, 0.0)
            alpha = 1.0
            accepted = False
            while alpha > 1e-6:
                xs_t, us_t = kernels.retract_horizon(xs, us, dx, du, alpha)
                m_t, _, _ = self.merit(x0, xs_t, us_t, refs, udes, nu_eq)
                if m_t <= m0 - 1e-4 * alpha * pred and m_t < m0:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            xs, us = xs_t, us_t
            merits.append(m_t)

        max_dyn, max_viol = kernels.horizon_checks(xs, us, cfg.dt, *self._kernel_args(),
                                                   *self._constraint_args())
        diag = {
            "iterations": it,
            "qp_status": status,
            "qp_iterations": qp_iters,
            "qp_time": qp_time,
            "kkt": float(kkt),
            "max_violation": float(max_viol),
            "dynamics_residual": float(max_dyn),
            "merit_history": merits,
            "cost": float(kernels.horizon_cost(xs, us, refs, udes, cfg.Q_X, cfg.Q_XN, self.Qu)),
            "solve_time": time.perf_counter() - t_start,
        }
        return OcpSolution(xs, us, stage_tensions(xs, us, self.model), diag)

    def dynamics_residual(self, xs, us) -> float:
        """Largest shooting defect of a trajectory (inf-norm)."""
        d, _ = kernels.horizon_checks(np.ascontiguousarray(xs, dtype=np.float64),
                                      np.ascontiguousarray(us, dtype=np.float64), self.cfg.dt,
                                      *self._kernel_args(), *self._constraint_args())
        return float(d)

    def robot_positions(self, solution: OcpSolution, stage: int = 0) -> np.ndarray:
        """Predicted load-frame robot positions implied by a stage's tensions."""
        mu = solution.tensions[stage]
        u = mu / np.linalg.norm(mu, axis=1, keepdims=True)
        return self.model.rho + self.model.cable_len[:, None] * u
