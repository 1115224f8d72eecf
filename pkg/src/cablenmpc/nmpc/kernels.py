"""Per-stage linearization kernels for the payload OCP.

Tangent perturbations of a payload state use ``[dp, dv, dtheta, domega]``
with the attitude perturbation applied on the right, ``q ⊗ exp(dtheta)``.
"""
import numpy as np

from .._jit import kernel
from ..geom import _hat, _quat_conj, _quat_left, _quat_to_rot, _so3_right_jac_inv
from ..payload import _difference, _normalize_state, _retract, _rk4_sens, _state_error


@kernel
def _tangent_in(x):
    """d(x ⊕ d)/dd at d = 0, shape (13, 12)."""
    T = np.zeros((13, 12))
    for i in range(3):
        T[i, i] = 1.0
        T[7 + i, 3 + i] = 1.0
        T[10 + i, 9 + i] = 1.0
    T[3:7, 6:9] = 0.5 * _quat_left(x[3:7])[:, 1:4]
    return T


@kernel
def _tangent_out(x_raw):
    """Derivative of ``normalize(y) ⊖ normalize(x_raw)`` w.r.t. y at y = x_raw."""
    T = np.zeros((12, 13))
    for i in range(3):
        T[i, i] = 1.0
        T[3 + i, 7 + i] = 1.0
        T[9 + i, 10 + i] = 1.0
    q = x_raw[3:7]
    nq = np.sqrt(np.sum(q * q))
    qinv = _quat_conj(q / nq)
    T[6:9, 3:7] = (2.0 / nq) * _quat_left(qinv)[1:4, :]
    return T


@kernel
def stage_dynamics(x, wrench, x_next, dt, mass, J, Jinv, g):
    """Shooting defect ``f_rk4(x, w) ⊖ x_next`` with its tangent Jacobians."""
    xr, Phx, Phw = _rk4_sens(x, wrench, dt, mass, J, Jinv, g)
    xf = _normalize_state(xr)
    d = _difference(xf, x_next)
    To = _tangent_out(xr)
    A = To @ Phx @ _tangent_in(x)
    B = To @ Phw
    Jri = _so3_right_jac_inv(d[6:9])
    A[6:9, :] = Jri @ A[6:9, :].copy()
    B[6:9, :] = Jri @ B[6:9, :].copy()
    return d, A, B


@kernel
def state_error_jac(x, ref):
    """Tracking error and its Jacobian w.r.t. the tangent perturbation."""
    e = _state_error(x, ref)
    E = np.zeros((12, 12))
    for i in range(3):
        E[i, i] = -1.0
        E[3 + i, 3 + i] = -1.0
        E[9 + i, 9 + i] = -1.0
    E[6:9, 6:9] = _so3_right_jac_inv(e[6:9])
    return e, E


@kernel
def num_constraints(n, n_obs):
    return n * (n - 1) // 2 + n * n_obs + n_obs + 2 * n


@kernel
def stage_constraints(x, u, Ppinv, N, rho, lens, obstacles, d_r, f_max, mu_min):
    """Constraint residuals (>= 0 is feasible) and Jacobians for one stage.

    Order: pairwise separations, robot-obstacle distances (obstacle-major),
    payload-obstacle distances, tension upper bounds, tension lower bounds.
    """
    n = rho.shape[0]
    nu = 3 * n
    n_obs = obstacles.shape[0]
    nc = n * (n - 1) // 2 + n * n_obs + n_obs + 2 * n
    c = np.empty(nc)
    Cx = np.zeros((nc, 12))
    Cu = np.zeros((nc, nu))

    R = _quat_to_rot(x[3:7])
    Pf = Ppinv[:, 0:3].copy()
    Pm = Ppinv[:, 3:6].copy()
    Fl = R.T @ u[0:3]
    mu = Pf @ Fl + Pm @ u[3:6] + N @ u[6:nu]

    # Jacobian of stacked tensions w.r.t. [dx (12), du (nu)]
    Dmu = np.zeros((nu, 12 + nu))
    Dmu[:, 6:9] = Pf @ _hat(Fl)
    Dmu[:, 12:15] = Pf @ R.T
    Dmu[:, 15:18] = Pm
    Dmu[:, 18:12 + nu] = N

    pos = np.empty((n, 3))
    Dpos = np.empty((n, 3, 12 + nu))
    for k in range(n):
        mk = mu[3 * k:3 * k + 3]
        nk = max(np.sqrt(np.sum(mk * mk)), 1e-9)
        uk = mk / nk
        pos[k] = rho[k] + lens[k] * uk
        Pk = (np.eye(3) - np.outer(uk, uk)) * (lens[k] / nk)
        Dpos[k] = Pk @ Dmu[3 * k:3 * k + 3, :].copy()

    r = 0
    for k in range(n):
        for j in range(k + 1, n):
            dkj = pos[k] - pos[j]
            c[r] = np.sum(dkj * dkj) - d_r * d_r
            grad = 2.0 * (dkj @ (Dpos[k] - Dpos[j]))
            Cx[r] = grad[0:12]
            Cu[r] = grad[12:]
            r += 1

    xL = x[0:3]
    for o in range(n_obs):
        pO = obstacles[o, 0:3]
        d_or = obstacles[o, 3]
        for k in range(n):
            Rx = R @ pos[k]
            w = pO - xL - Rx
            c[r] = np.sum(w * w) - d_or * d_or
            Dw = -(R @ Dpos[k].copy())
            for i in range(3):
                Dw[i, i] -= 1.0
            Dw[:, 6:9] += R @ _hat(pos[k])
            grad = 2.0 * (w @ Dw)
            Cx[r] = grad[0:12]
            Cu[r] = grad[12:]
            r += 1
    for o in range(n_obs):
        w = obstacles[o, 0:3] - xL
        d_ol = obstacles[o, 4]
        c[r] = np.sum(w * w) - d_ol * d_ol
        Cx[r, 0:3] = -2.0 * w
        r += 1

    for k in range(n):
        mk = mu[3 * k:3 * k + 3]
        grad = 2.0 * (mk @ Dmu[3 * k:3 * k + 3, :].copy())
        c[r] = f_max * f_max - np.sum(mk * mk)
        Cx[r] = -grad[0:12]
        Cu[r] = -grad[12:]
        c[r + n] = np.sum(mk * mk) - mu_min * mu_min
        Cx[r + n] = grad[0:12]
        Cu[r + n] = grad[12:]
        r += 1
    return c, Cx, Cu


@kernel
def linearize_horizon(xs, us, refs, udes, x0, dt, mass, J, Jinv, g,
                      Qx, Qxn, Qu, Ppinv, N, rho, lens, obstacles, d_r, f_max, mu_min):
    """Linearize dynamics, cost and constraints over the whole horizon.

    Returns the Gauss-Newton QP data in tangent coordinates together with
    the current cost and the initial-value defect ``x0 ⊖ xs[0]``.
    """
    Nh = us.shape[0]
    nu = us.shape[1]
    n = rho.shape[0]
    nc = num_constraints(n, obstacles.shape[0])

    d0 = _difference(x0, xs[0])
    defects = np.empty((Nh, 12))
    A = np.empty((Nh, 12, 12))
    B = np.zeros((Nh, 12, nu))
    Hx = np.empty((Nh + 1, 12, 12))
    gx = np.empty((Nh + 1, 12))
    Hu = np.empty((Nh, nu, nu))
    gu = np.empty((Nh, nu))
    c = np.empty((Nh, nc))
    Cx = np.empty((Nh, nc, 12))
    Cu = np.empty((Nh, nc, nu))
    cost = 0.0

    Eu = np.zeros((nu, nu))
    for i in range(6):
        Eu[i, i] = -1.0
    for i in range(6, nu):
        Eu[i, i] = 1.0
    Hu_const = 2.0 * (Eu.T @ Qu @ Eu)

    for i in range(Nh + 1):
        e, E = state_error_jac(xs[i], refs[i])
        Q = Qx if i < Nh else Qxn
        Qe = Q @ e
        cost += e @ Qe
        Hx[i] = 2.0 * (E.T @ Q @ E)
        gx[i] = 2.0 * (E.T @ Qe)

    for i in range(Nh):
        d, Ai, Bw = stage_dynamics(xs[i], us[i, 0:6], xs[i + 1], dt, mass, J, Jinv, g)
        defects[i] = d
        A[i] = Ai
        B[i, :, 0:6] = Bw

        eu = np.empty(nu)
        eu[0:6] = udes[i] - us[i, 0:6]
        eu[6:nu] = us[i, 6:nu]
        Que = Qu @ eu
        cost += eu @ Que
        Hu[i] = Hu_const
        gu[i] = 2.0 * (Eu.T @ Que)

        ci, Cxi, Cui = stage_constraints(xs[i], us[i], Ppinv, N, rho, lens, obstacles,
                                         d_r, f_max, mu_min)
        c[i] = ci
        Cx[i] = Cxi
        Cu[i] = Cui
    return d0, defects, A, B, Hx, gx, Hu, gu, c, Cx, Cu, cost


@kernel
def rollout(x0, us, dt, mass, J, Jinv, g):
    Nh = us.shape[0]
    xs = np.empty((Nh + 1, 13))
    xs[0] = x0
    for i in range(Nh):
        xr, _, _ = _rk4_sens(xs[i], us[i, 0:6], dt, mass, J, Jinv, g)
        xs[i + 1] = _normalize_state(xr)
    return xs


@kernel
def horizon_cost(xs, us, refs, udes, Qx, Qxn, Qu):
    Nh = us.shape[0]
    nu = us.shape[1]
    cost = 0.0
    for i in range(Nh + 1):
        e = _state_error(xs[i], refs[i])
        if i < Nh:
            cost += e @ (Qx @ e)
        else:
            cost += e @ (Qxn @ e)
    for i in range(Nh):
        eu = np.empty(nu)
        eu[0:6] = udes[i] - us[i, 0:6]
        eu[6:nu] = us[i, 6:nu]
        cost += eu @ (Qu @ eu)
    return cost


@kernel
def merit_terms(xs, us, x0, dt, mass, J, Jinv, g, Ppinv, N, rho, lens, obstacles,
                d_r, f_max, mu_min):
    """L1 norms of shooting defects and of inequality violations."""
    Nh = us.shape[0]
    defect = np.sum(np.abs(_difference(x0, xs[0])))
    viol = 0.0
    for i in range(Nh):
        xr, _, _ = _rk4_sens(xs[i], us[i, 0:6], dt, mass, J, Jinv, g)
        defect += np.sum(np.abs(_difference(_normalize_state(xr), xs[i + 1])))
        ci, _, _ = stage_constraints(xs[i], us[i], Ppinv, N, rho, lens, obstacles,
                                     d_r, f_max, mu_min)
        for v in ci:
            if v < 0.0:
                viol -= v
    return defect, viol


@kernel
def horizon_checks(xs, us, dt, mass, J, Jinv, g, Ppinv, N, rho, lens, obstacles,
                   d_r, f_max, mu_min):
    """Largest shooting defect (inf-norm) and largest constraint violation."""
    Nh = us.shape[0]
    defect = 0.0
    viol = 0.0
    for i in range(Nh):
        xr, _, _ = _rk4_sens(xs[i], us[i, 0:6], dt, mass, J, Jinv, g)
        defect = max(defect, np.max(np.abs(_difference(_normalize_state(xr), xs[i + 1]))))
        ci, _, _ = stage_constraints(xs[i], us[i], Ppinv, N, rho, lens, obstacles,
                                     d_r, f_max, mu_min)
        for v in ci:
            viol = max(viol, -v)
    return defect, viol


@kernel
def retract_horizon(xs, us, dx, du, alpha):
    out = xs.copy()
    for i in range(xs.shape[0]):
        out[i] = _retract(xs[i], alpha * dx[i])
    return out, us + alpha * du
